#pragma once

#include <cstdint>
#include <vector>

#include "equal/embed.hpp"

namespace equal::ot {

// Weighted point cloud on the unit sphere. Weights sum to 1.
struct EmpiricalDistribution {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<float> points;    // row-major, L2-normalized rows
    std::vector<double> weights;  // non-negative, sum 1 within 1e-9

    std::span<const float> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
    void validate() const;

    // Uniform weights over the rows of a matrix.
    static EmpiricalDistribution uniform(const embed::EmbeddingMatrix& m);
};

enum class OTMethod { exact, entropic };

struct OTResult {
    double cost = 0.0;
    std::vector<double> plan;  // n*m row-major when retained, else empty
    bool has_plan = false;
    OTMethod method = OTMethod::exact;
    int iterations = 0;
    bool converged = true;
};

// C[i][j] = 1 - cos(a_i, b_j), in [0, 2].
std::vector<double> cost_matrix(const EmpiricalDistribution& a, const EmpiricalDistribution& b);

// Exact optimum via the transportation simplex. Refuses instances with more
// than max_cells coupling entries (callers should fall back to ot_sinkhorn).
OTResult ot_exact(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                  std::size_t max_cells = 64 * 64, bool keep_plan = true);

// Entropic OT, log-domain alternating scaling with warm-started epsilon
// annealing. Cost is <plan, C> without the entropy term. Converged when the
// worst marginal violation is at most marginal_tol.
OTResult ot_sinkhorn(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                     double epsilon, int max_iters = 2000, bool keep_plan = false,
                     double marginal_tol = 1e-6);

// Monotone bijection [0,2] -> [1,0]; clamps (with a stderr warning) outside.
double ot_reward(double cost);

// Identity when n <= cap, else a uniform without-replacement sample with
// weights reset to uniform. Deterministic given seed.
EmpiricalDistribution subsample(const EmpiricalDistribution& d, std::size_t cap, std::uint64_t seed);

struct OtConfig {
    std::size_t exact_cells_cap = 64 * 64;
    double epsilon = 0.05;
    int max_iters = 2000;
    std::size_t point_cap = 2048;
};

// Exact when the instance fits under the cap, entropic otherwise.
OTResult ot_cost(const EmpiricalDistribution& a, const EmpiricalDistribution& b, const OtConfig& cfg);

}  // namespace equal::ot
