#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "equal/common.hpp"
#include "equal/error.hpp"
#include "equal/ot.hpp"

using namespace equal;
using namespace equal::ot;

namespace {

EmpiricalDistribution make_dist(const std::vector<std::vector<float>>& points,
                                std::vector<double> weights = {}) {
    EmpiricalDistribution d;
    d.n = points.size();
    d.dim = points.empty() ? 0 : points[0].size();
    for (const auto& p : points) d.points.insert(d.points.end(), p.begin(), p.end());
    if (weights.empty()) {
        d.weights.assign(d.n, 1.0 / static_cast<double>(d.n));
    } else {
        d.weights = std::move(weights);
    }
    return d;
}

std::vector<float> random_unit(rng::Engine& eng, std::size_t dim) {
    std::vector<float> v(dim);
    double ss = 0.0;
    for (auto& x : v) {
        const double u1 = std::max(rng::uniform01(eng), 1e-12);
        const double u2 = rng::uniform01(eng);
        x = static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
        ss += static_cast<double>(x) * x;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(ss));
    for (auto& x : v) x *= inv;
    return v;
}

EmpiricalDistribution random_cloud(rng::Engine& eng, std::size_t n, std::size_t dim) {
    std::vector<std::vector<float>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(random_unit(eng, dim));
    return make_dist(pts);
}

// Uniform equal-size marginals put the optimum on a permutation: the
// enumeration over all n! assignments is the independent oracle.
double brute_force_uniform(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
    REQUIRE(a.n == b.n);
    const auto c = cost_matrix(a, b);
    std::vector<std::size_t> perm(a.n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < a.n; ++i) total += c[i * b.n + perm[i]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(a.n);
}

void check_marginals(const OTResult& res, const EmpiricalDistribution& a,
                     const EmpiricalDistribution& b, double tol) {
    REQUIRE(res.has_plan);
    for (std::size_t i = 0; i < a.n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < b.n; ++j) row += res.plan[i * b.n + j];
        CHECK(std::abs(row - a.weights[i]) <= tol);
    }
    for (std::size_t j = 0; j < b.n; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < a.n; ++i) col += res.plan[i * b.n + j];
        CHECK(std::abs(col - b.weights[j]) <= tol);
    }
}

}  // namespace

TEST_SUITE("ot") {

TEST_CASE("cost_matrix corners") {
    const auto e1 = make_dist({{1, 0}});
    const auto e2 = make_dist({{0, 1}});
    const auto e3 = make_dist({{-1, 0}});
    CHECK(cost_matrix(e1, e1)[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cost_matrix(e1, e2)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cost_matrix(e1, e3)[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ot_exact trivial instances") {
    const auto a = make_dist({{1, 0}, {0, 1}});
    CHECK(ot_exact(a, a).cost == doctest::Approx(0.0).epsilon(1e-12));

    const auto single_a = make_dist({{1, 0}});
    const auto single_b = make_dist({{0, 1}});
    CHECK(ot_exact(single_a, single_b).cost == doctest::Approx(1.0).epsilon(1e-12));

    // both source atoms must flow to the single target
    const auto pair = make_dist({{1, 0}, {0, 1}});
    const auto target = make_dist({{1, 0}});
    CHECK(ot_exact(pair, target).cost == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ot_exact equals the permutation brute force on 50 random instances") {
    rng::Engine eng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng::uniform_index(eng, 5);  // 2..6
        const auto a = random_cloud(eng, n, 4);
        const auto b = random_cloud(eng, n, 4);
        const auto res = ot_exact(a, b);
        CHECK(std::abs(res.cost - brute_force_uniform(a, b)) <= 1e-9);
        check_marginals(res, a, b, 1e-9);
        // cost equals <plan, C>
        const auto c = cost_matrix(a, b);
        double dot = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) dot += res.plan[k] * c[k];
        CHECK(std::abs(dot - res.cost) <= 1e-9);
    }
}

TEST_CASE("ot_exact handles unequal sizes and non-uniform weights") {
    const auto a = make_dist({{1, 0}, {0, 1}, {-1, 0}}, {0.5, 0.25, 0.25});
    const auto b = make_dist({{1, 0}, {0, 1}}, {0.4, 0.6});
    const auto res = ot_exact(a, b);
    check_marginals(res, a, b, 1e-12);
    // hand-solved: keep (1,0) and (0,1) in place, send the (-1,0) atom to
    // (0,1); overflow 0.1 of (1,0) also goes to (0,1): 0.1*1 + 0.25*1 = 0.35
    CHECK(res.cost == doctest::Approx(0.35).epsilon(1e-9));
}

TEST_CASE("ot_exact symmetry") {
    rng::Engine eng(31337);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_cloud(eng, 5, 3);
        const auto b = random_cloud(eng, 6, 3);
        CHECK(std::abs(ot_exact(a, b).cost - ot_exact(b, a).cost) <= 1e-9);
    }
}

TEST_CASE("ot_exact refuses instances over the cell cap") {
    rng::Engine eng(3);
    const auto a = random_cloud(eng, 9, 2);
    const auto b = random_cloud(eng, 8, 2);
    CHECK_THROWS_WITH_AS(ot_exact(a, b, 64), doctest::Contains("ot_sinkhorn"), NumericError);
}

TEST_CASE("ot_exact rejects infeasible weights") {
    auto a = make_dist({{1, 0}}, {0.9});
    const auto b = make_dist({{0, 1}}, {1.0});
    CHECK_THROWS_AS(ot_exact(a, b), NumericError);
}

TEST_CASE("sinkhorn: identical uniform distributions cost near zero") {
    rng::Engine eng(5);
    const auto a = random_cloud(eng, 8, 6);
    const auto res = ot_sinkhorn(a, a, 0.01, 5000, true);
    CHECK(res.converged);
    CHECK(res.cost <= 1e-3);
    check_marginals(res, a, a, 1e-6);
}

TEST_CASE("sinkhorn tracks the exact solver on random instances") {
    rng::Engine eng(6060);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng::uniform_index(eng, 15);  // 2..16
        const std::size_t m = 2 + rng::uniform_index(eng, 15);
        const auto a = random_cloud(eng, n, 5);
        const auto b = random_cloud(eng, m, 5);
        const auto exact = ot_exact(a, b);
        const auto approx = ot_sinkhorn(a, b, 0.01, 20000, true);
        CHECK(approx.converged);
        CHECK(std::abs(approx.cost - exact.cost) <= 1e-2);
        check_marginals(approx, a, b, 1e-6);
    }
}

TEST_CASE("sinkhorn with huge epsilon overshoots the exact cost") {
    rng::Engine eng(8);
    const auto a = random_cloud(eng, 6, 3);
    const auto b = random_cloud(eng, 7, 3);
    const auto exact = ot_exact(a, b);
    const auto blurred = ot_sinkhorn(a, b, 10.0, 2000);
    CHECK(blurred.cost > exact.cost + 1e-3);
}

TEST_CASE("ot_reward endpoints and monotonicity") {
    CHECK(ot_reward(0.0) == doctest::Approx(1.0));
    CHECK(ot_reward(2.0) == doctest::Approx(0.0));
    CHECK(ot_reward(1.0) == doctest::Approx(0.5));
    rng::Engine eng(9);
    for (int i = 0; i < 20; ++i) {
        const double c1 = 2.0 * rng::uniform01(eng), c2 = 2.0 * rng::uniform01(eng);
        // strictly decreasing: argmax by reward equals argmin by cost
        if (c1 < c2) CHECK(ot_reward(c1) > ot_reward(c2));
    }
}

TEST_CASE("subsample: identity under cap, deterministic above") {
    rng::Engine eng(10);
    const auto small = random_cloud(eng, 5, 3);
    const auto same = subsample(small, 10, 123);
    CHECK(same.n == 5);
    CHECK(same.points == small.points);

    const auto big = random_cloud(eng, 100, 3);
    const auto s1 = subsample(big, 10, 42);
    const auto s2 = subsample(big, 10, 42);
    REQUIRE(s1.n == 10);
    CHECK(s1.points == s2.points);
    CHECK(s1.weights[0] == doctest::Approx(0.1));
    const auto s3 = subsample(big, 10, 43);
    CHECK(s1.points != s3.points);
}

TEST_CASE("subsampled OT cost stays close to the full cost") {
    rng::Engine eng(1234);
    // two offset clouds; 200 source points, 50 reference points
    std::vector<std::vector<float>> pa, pb;
    for (int i = 0; i < 200; ++i) {
        auto v = random_unit(eng, 6);
        v[0] = std::abs(v[0]) + 0.5f;
        pa.push_back(v);
    }
    for (int i = 0; i < 50; ++i) {
        auto v = random_unit(eng, 6);
        v[1] = std::abs(v[1]) + 0.5f;
        pb.push_back(v);
    }
    auto a = make_dist(pa);
    auto b = make_dist(pb);
    embed::EmbeddingMatrix ma{a.n, a.dim, a.points, std::vector<std::string>(a.n)};
    ma.normalize();
    a.points = ma.data;
    embed::EmbeddingMatrix mb{b.n, b.dim, b.points, std::vector<std::string>(b.n)};
    mb.normalize();
    b.points = mb.data;

    const double full = ot_sinkhorn(a, b, 0.01, 20000).cost;
    const double capped = ot_sinkhorn(subsample(a, 128, 7), b, 0.01, 20000).cost;
    CHECK(std::abs(full - capped) <= 0.1);
}

TEST_CASE("ot_cost dispatches on instance size") {
    rng::Engine eng(11);
    const auto a = random_cloud(eng, 4, 3);
    const auto b = random_cloud(eng, 4, 3);
    OtConfig cfg;
    cfg.exact_cells_cap = 64;
    CHECK(std::abs(ot_cost(a, b, cfg).cost - ot_exact(a, b).cost) <= 1e-12);

    const auto big_a = random_cloud(eng, 12, 3);
    const auto big_b = random_cloud(eng, 12, 3);
    const auto res = ot_cost(big_a, big_b, cfg);  // 144 cells > 64 -> entropic
    const auto exact = ot_exact(big_a, big_b);
    CHECK(std::abs(res.cost - exact.cost) <= 0.05);
}

TEST_CASE("validate rejects bad weights") {
    auto d = make_dist({{1, 0}, {0, 1}});
    d.weights = {0.6, 0.6};
    CHECK_THROWS_AS(d.validate(), NumericError);
    d.weights = {1.2, -0.2};
    CHECK_THROWS_AS(d.validate(), NumericError);
}

}  // TEST_SUITE
