#include "equal/ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "equal/common.hpp"
#include "equal/error.hpp"

namespace equal::ot {

void EmpiricalDistribution::validate() const {
    if (points.size() != n * dim) throw NumericError("distribution points misshaped");
    if (weights.size() != n) throw NumericError("distribution weights misaligned");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw NumericError("negative or NaN weight");
        sum += w;
    }
    if (n > 0 && std::abs(sum - 1.0) > 1e-9) throw NumericError("weights do not sum to 1");
    for (float x : points) {
        if (!std::isfinite(x)) throw NumericError("non-finite point coordinate");
    }
}

EmpiricalDistribution EmpiricalDistribution::uniform(const embed::EmbeddingMatrix& m) {
    EmpiricalDistribution d;
    d.n = m.rows;
    d.dim = m.dim;
    d.points = m.data;
    d.weights.assign(m.rows, m.rows ? 1.0 / static_cast<double>(m.rows) : 0.0);
    return d;
}

std::vector<double> cost_matrix(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
    if (a.dim != b.dim) throw NumericError("cost_matrix: dimension mismatch");
    std::vector<double> c(a.n * b.n);
    for (std::size_t i = 0; i < a.n; ++i) {
        for (std::size_t j = 0; j < b.n; ++j) {
            c[i * b.n + j] = 1.0 - embed::cosine_sim(a.point(i), b.point(j));
        }
    }
    return c;
}

namespace {

// Transportation simplex over the bipartite tree basis. Nodes 0..n-1 are
// sources, n..n+m-1 sinks; basic cells are tree edges.
class TransportSimplex {
  public:
    TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                     const std::vector<double>& cost)
        : n_(supply.size()), m_(demand.size()), a_(std::move(supply)), b_(std::move(demand)),
          c_(cost), basic_(n_ * m_, false), flow_(n_ * m_, 0.0) {}

    int solve() {
        northwest_corner();
        const int pivot_cap = 2000 + 40 * static_cast<int>(n_ * m_);
        int pivots = 0;
        while (true) {
            compute_duals();
            const long entering = pivots < pivot_cap / 2 ? find_entering_dantzig()
                                                         : find_entering_bland();
            if (entering < 0) break;
            pivot(static_cast<std::size_t>(entering));
            if (++pivots > pivot_cap) {
                throw NumericError("transportation simplex exceeded pivot cap");
            }
        }
        recover_flows();
        return pivots;
    }

    double cost() const {
        double total = 0.0;
        for (std::size_t k = 0; k < flow_.size(); ++k) {
            if (flow_[k] > 0.0) total += flow_[k] * c_[k];
        }
        return total;
    }

    const std::vector<double>& plan() const { return flow_; }

  private:
    std::size_t cell(std::size_t i, std::size_t j) const { return i * m_ + j; }

    void set_basic(std::size_t k, bool on) {
        basic_[k] = on;
    }

    void northwest_corner() {
        std::vector<double> ra = a_, rb = b_;
        std::size_t i = 0, j = 0;
        while (true) {
            const double t = std::min(ra[i], rb[j]);
            flow_[cell(i, j)] = std::max(t, 0.0);
            set_basic(cell(i, j), true);
            ra[i] -= t;
            rb[j] -= t;
            if (i == n_ - 1 && j == m_ - 1) break;
            if (i == n_ - 1) ++j;
            else if (j == m_ - 1) ++i;
            else if (ra[i] <= rb[j]) ++i;
            else ++j;
        }
    }

    // Solve u_i + v_j = c_ij over the basis tree, u_0 = 0.
    void compute_duals() {
        u_.assign(n_, 0.0);
        v_.assign(m_, 0.0);
        std::vector<char> done(n_ + m_, 0);
        std::vector<std::size_t> stack = {0};
        done[0] = 1;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < n_) {
                const std::size_t i = node;
                for (std::size_t j = 0; j < m_; ++j) {
                    if (basic_[cell(i, j)] && !done[n_ + j]) {
                        v_[j] = c_[cell(i, j)] - u_[i];
                        done[n_ + j] = 1;
                        stack.push_back(n_ + j);
                    }
                }
            } else {
                const std::size_t j = node - n_;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (basic_[cell(i, j)] && !done[i]) {
                        u_[i] = c_[cell(i, j)] - v_[j];
                        done[i] = 1;
                        stack.push_back(i);
                    }
                }
            }
        }
    }

    long find_entering_dantzig() const {
        long best = -1;
        double best_r = -1e-11;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < m_; ++j) {
                const std::size_t k = cell(i, j);
                if (basic_[k]) continue;
                const double r = c_[k] - u_[i] - v_[j];
                if (r < best_r) {
                    best_r = r;
                    best = static_cast<long>(k);
                }
            }
        }
        return best;
    }

    long find_entering_bland() const {
        for (std::size_t k = 0; k < basic_.size(); ++k) {
            if (basic_[k]) continue;
            if (c_[k] - u_[k / m_] - v_[k % m_] < -1e-11) return static_cast<long>(k);
        }
        return -1;
    }

    // Tree path from source node i to sink node n+j, as node sequence.
    std::vector<std::size_t> tree_path(std::size_t from, std::size_t to) const {
        std::vector<long> parent(n_ + m_, -1);
        std::vector<std::size_t> stack = {from};
        parent[from] = static_cast<long>(from);
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node == to) break;
            if (node < n_) {
                for (std::size_t j = 0; j < m_; ++j) {
                    if (basic_[cell(node, j)] && parent[n_ + j] < 0) {
                        parent[n_ + j] = static_cast<long>(node);
                        stack.push_back(n_ + j);
                    }
                }
            } else {
                const std::size_t j = node - n_;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (basic_[cell(i, j)] && parent[i] < 0) {
                        parent[i] = static_cast<long>(node);
                        stack.push_back(i);
                    }
                }
            }
        }
        std::vector<std::size_t> path;
        for (std::size_t node = to; ; node = static_cast<std::size_t>(parent[node])) {
            path.push_back(node);
            if (node == from) break;
        }
        std::reverse(path.begin(), path.end());
        return path;
    }

    void pivot(std::size_t entering) {
        const std::size_t ei = entering / m_, ej = entering % m_;
        const auto path = tree_path(ei, n_ + ej);
        // Cycle cells: entering cell plus the tree edges along the path.
        // Walking from the entering cell, signs alternate +,-,+,...
        std::vector<std::size_t> minus_cells, plus_cells;
        for (std::size_t s = 0; s + 1 < path.size(); ++s) {
            const std::size_t x = path[s], y = path[s + 1];
            const std::size_t i = x < n_ ? x : y;
            const std::size_t j = x < n_ ? y - n_ : x - n_;
            if (s % 2 == 0) minus_cells.push_back(cell(i, j));
            else plus_cells.push_back(cell(i, j));
        }
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leaving = minus_cells.front();
        for (std::size_t k : minus_cells) {
            if (flow_[k] < theta) {
                theta = flow_[k];
                leaving = k;
            }
        }
        flow_[entering] = theta;
        set_basic(entering, true);
        for (std::size_t k : plus_cells) flow_[k] += theta;
        for (std::size_t k : minus_cells) flow_[k] = std::max(flow_[k] - theta, 0.0);
        flow_[leaving] = 0.0;
        set_basic(leaving, false);
    }

    // Re-derive basic flows from the marginals by leaf elimination, removing
    // incremental pivot rounding.
    void recover_flows() {
        std::vector<double> ra = a_, rb = b_;
        std::vector<int> degree(n_ + m_, 0);
        std::vector<char> alive(n_ * m_, 0);
        for (std::size_t k = 0; k < basic_.size(); ++k) {
            if (!basic_[k]) {
                flow_[k] = 0.0;
                continue;
            }
            alive[k] = 1;
            degree[k / m_]++;
            degree[n_ + k % m_]++;
        }
        std::vector<std::size_t> leaves;
        for (std::size_t node = 0; node < n_ + m_; ++node) {
            if (degree[node] == 1) leaves.push_back(node);
        }
        while (!leaves.empty()) {
            const std::size_t node = leaves.back();
            leaves.pop_back();
            if (degree[node] != 1) continue;
            long found = -1;
            if (node < n_) {
                for (std::size_t j = 0; j < m_; ++j) {
                    if (alive[cell(node, j)]) { found = static_cast<long>(cell(node, j)); break; }
                }
            } else {
                for (std::size_t i = 0; i < n_; ++i) {
                    if (alive[cell(i, node - n_)]) { found = static_cast<long>(cell(i, node - n_)); break; }
                }
            }
            if (found < 0) continue;
            const std::size_t k = static_cast<std::size_t>(found);
            const std::size_t i = k / m_, j = k % m_;
            const double f = std::max(node < n_ ? ra[i] : rb[j], 0.0);
            flow_[k] = f;
            ra[i] -= f;
            rb[j] -= f;
            alive[k] = 0;
            degree[i]--;
            degree[n_ + j]--;
            if (degree[i] == 1) leaves.push_back(i);
            if (degree[n_ + j] == 1) leaves.push_back(n_ + j);
        }
    }

    std::size_t n_, m_;
    std::vector<double> a_, b_;
    const std::vector<double>& c_;
    std::vector<char> basic_;
    std::vector<double> flow_;
    std::vector<double> u_, v_;
};

}  // namespace

OTResult ot_exact(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                  std::size_t max_cells, bool keep_plan) {
    a.validate();
    b.validate();
    if (a.n == 0 || b.n == 0) throw NumericError("ot_exact: empty distribution");
    if (a.n * b.n > max_cells) {
        throw NumericError("ot_exact: instance exceeds exact-size cap (" +
                           std::to_string(a.n) + "x" + std::to_string(b.n) +
                           "); use ot_sinkhorn");
    }
    double sa = 0.0, sb = 0.0;
    for (double w : a.weights) sa += w;
    for (double w : b.weights) sb += w;
    if (std::abs(sa - sb) > 1e-9) throw NumericError("ot_exact: infeasible weights (mass mismatch)");

    const auto c = cost_matrix(a, b);
    TransportSimplex simplex(a.weights, b.weights, c);
    OTResult res;
    res.method = OTMethod::exact;
    res.iterations = simplex.solve();
    res.cost = simplex.cost();
    res.converged = true;
    if (keep_plan) {
        res.plan = simplex.plan();
        res.has_plan = true;
    }
    return res;
}

OTResult ot_sinkhorn(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                     double epsilon, int max_iters, bool keep_plan, double marginal_tol) {
    a.validate();
    b.validate();
    if (a.n == 0 || b.n == 0) throw NumericError("ot_sinkhorn: empty distribution");
    if (epsilon <= 0.0) throw NumericError("ot_sinkhorn: epsilon must be positive");

    const std::size_t n = a.n, m = b.n;
    const auto c = cost_matrix(a, b);
    constexpr double kNegInf = -1e300;
    std::vector<double> log_mu(n), log_nu(m);
    for (std::size_t i = 0; i < n; ++i) log_mu[i] = a.weights[i] > 0.0 ? std::log(a.weights[i]) : kNegInf;
    for (std::size_t j = 0; j < m; ++j) log_nu[j] = b.weights[j] > 0.0 ? std::log(b.weights[j]) : kNegInf;

    // Dual potentials in cost units; log pi_ij = (f_i + g_j - c_ij)/eps + log_mu_i + log_nu_j.
    std::vector<double> f(n, 0.0), g(m, 0.0);
    const auto log_plan = [&](std::size_t i, std::size_t j, double eps) {
        return (f[i] + g[j] - c[i * m + j]) / eps + log_mu[i] + log_nu[j];
    };
    std::vector<double> buf(std::max(n, m));
    const auto lse = [](const double* xs, std::size_t len) {
        double mx = xs[0];
        for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xs[i]);
        if (mx <= kNegInf) return kNegInf;
        double acc = 0.0;
        for (std::size_t i = 0; i < len; ++i) acc += std::exp(xs[i] - mx);
        return mx + std::log(acc);
    };

    // Annealed epsilon schedule, halving down to the target.
    std::vector<double> schedule;
    for (double e = std::max(epsilon, 1.0); e > epsilon; e *= 0.5) schedule.push_back(e);
    schedule.push_back(epsilon);

    OTResult res;
    res.method = OTMethod::entropic;
    res.converged = false;
    int iters = 0;
    double violation = std::numeric_limits<double>::infinity();
    double eps_used = schedule.front();
    for (std::size_t stage = 0; stage < schedule.size() && iters < max_iters; ++stage) {
        const double eps = schedule[stage];
        eps_used = eps;
        const bool final_stage = stage + 1 == schedule.size();
        const double stage_tol = final_stage ? marginal_tol : 1e-3;
        const int stage_cap = final_stage ? max_iters : std::min(max_iters, 200);
        double best_violation = std::numeric_limits<double>::infinity();
        int since_progress = 0;
        for (int it = 0; it < stage_cap && iters < max_iters; ++it, ++iters) {
            for (std::size_t i = 0; i < n; ++i) {
                if (log_mu[i] <= kNegInf) continue;
                for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - c[i * m + j]) / eps + log_nu[j];
                f[i] = -eps * lse(buf.data(), m);
            }
            for (std::size_t j = 0; j < m; ++j) {
                if (log_nu[j] <= kNegInf) continue;
                for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - c[i * m + j]) / eps + log_mu[i];
                g[j] = -eps * lse(buf.data(), n);
            }
            if (it % 5 == 4 || it == stage_cap - 1 || iters == max_iters - 1) {
                violation = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double row = 0.0;
                    for (std::size_t j = 0; j < m; ++j) row += std::exp(log_plan(i, j, eps));
                    violation = std::max(violation, std::abs(row - a.weights[i]));
                }
                if (violation <= stage_tol) {
                    ++iters;
                    break;
                }
                // small-epsilon tail can stall; the polytope rounding below
                // absorbs the residual once progress stops
                if (violation < 0.9 * best_violation) {
                    best_violation = violation;
                    since_progress = 0;
                } else if (final_stage && ++since_progress >= 40) {
                    ++iters;
                    break;
                }
            }
        }
    }
    const double dual_violation = violation;
    res.iterations = iters;

    // materialize the plan, then round it onto the transport polytope:
    // scale rows and columns down to their marginals, then spread the
    // leftover mass as a rank-one correction
    std::vector<double> plan(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) plan[i * m + j] = std::exp(log_plan(i, j, eps_used));
    }
    {
        std::vector<double> row_err(n, 0.0), col_err(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m; ++j) row += plan[i * m + j];
            const double scale = row > 0.0 ? std::min(1.0, a.weights[i] / row) : 0.0;
            for (std::size_t j = 0; j < m; ++j) plan[i * m + j] *= scale;
        }
        for (std::size_t j = 0; j < m; ++j) {
            double col = 0.0;
            for (std::size_t i = 0; i < n; ++i) col += plan[i * m + j];
            const double scale = col > 0.0 ? std::min(1.0, b.weights[j] / col) : 0.0;
            for (std::size_t i = 0; i < n; ++i) plan[i * m + j] *= scale;
            col *= scale;
            col_err[j] = std::max(b.weights[j] - col, 0.0);
        }
        double total_err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m; ++j) row += plan[i * m + j];
            row_err[i] = std::max(a.weights[i] - row, 0.0);
            total_err += row_err[i];
        }
        if (total_err > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (row_err[i] == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j) {
                    plan[i * m + j] += row_err[i] * col_err[j] / total_err;
                }
            }
        }
    }

    violation = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m; ++j) row += plan[i * m + j];
        violation = std::max(violation, std::abs(row - a.weights[i]));
    }
    for (std::size_t j = 0; j < m; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < n; ++i) col += plan[i * m + j];
        violation = std::max(violation, std::abs(col - b.weights[j]));
    }
    res.converged =
        violation <= marginal_tol && dual_violation <= 1e-4 && eps_used == schedule.back();

    double cost = 0.0;
    for (std::size_t k = 0; k < plan.size(); ++k) cost += plan[k] * c[k];
    res.cost = cost;
    if (keep_plan) {
        res.plan = std::move(plan);
        res.has_plan = true;
    }
    return res;
}

double ot_reward(double cost) {
    if (cost < 0.0 || cost > 2.0) {
        std::fprintf(stderr, "warning: OT cost %.6f outside [0,2], clamping\n", cost);
        cost = std::clamp(cost, 0.0, 2.0);
    }
    return 1.0 - cost / 2.0;
}

EmpiricalDistribution subsample(const EmpiricalDistribution& d, std::size_t cap, std::uint64_t seed) {
    if (cap < 1) throw ConfigError("subsample: cap must be >= 1");
    if (d.n <= cap) return d;
    rng::Engine eng(seed);
    auto picks = rng::sample_without_replacement(eng, d.n, cap);
    std::sort(picks.begin(), picks.end());
    EmpiricalDistribution out;
    out.n = cap;
    out.dim = d.dim;
    out.points.reserve(cap * d.dim);
    for (std::size_t idx : picks) {
        const auto p = d.point(idx);
        out.points.insert(out.points.end(), p.begin(), p.end());
    }
    out.weights.assign(cap, 1.0 / static_cast<double>(cap));
    return out;
}

OTResult ot_cost(const EmpiricalDistribution& a, const EmpiricalDistribution& b, const OtConfig& cfg) {
    if (a.n * b.n <= cfg.exact_cells_cap) return ot_exact(a, b, cfg.exact_cells_cap, false);
    return ot_sinkhorn(a, b, cfg.epsilon, cfg.max_iters, false);
}

}  // namespace equal::ot
