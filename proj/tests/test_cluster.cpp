#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "equal/cluster.hpp"
#include "equal/common.hpp"
#include "equal/error.hpp"
#include "test_util.hpp"

using namespace equal;
using namespace equal::cluster;

namespace {

embed::EmbeddingMatrix matrix_from(const std::vector<std::vector<float>>& rows) {
    embed::EmbeddingMatrix m;
    m.rows = rows.size();
    m.dim = rows.empty() ? 0 : rows[0].size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.data.insert(m.data.end(), rows[i].begin(), rows[i].end());
        m.ids.push_back("p" + std::to_string(i));
    }
    return m;
}

// Isotropic Gaussian blobs around well-separated centers.
embed::EmbeddingMatrix blobs(rng::Engine& eng, int k, int per_blob, double spread,
                             std::vector<std::uint32_t>* truth = nullptr) {
    const std::size_t dim = 4;
    std::vector<std::vector<float>> centers;
    for (int c = 0; c < k; ++c) {
        std::vector<float> center(dim, 0.0f);
        center[c % dim] = static_cast<float>(10.0 * (1 + c / dim));
        center[(c + 1) % dim] = static_cast<float>(c * 3.0);
        centers.push_back(center);
    }
    std::vector<std::vector<float>> rows;
    for (int c = 0; c < k; ++c) {
        for (int i = 0; i < per_blob; ++i) {
            auto p = centers[c];
            for (auto& x : p) {
                const double u1 = std::max(rng::uniform01(eng), 1e-12);
                const double u2 = rng::uniform01(eng);
                x += static_cast<float>(spread * std::sqrt(-2.0 * std::log(u1)) *
                                        std::cos(6.283185307179586 * u2));
            }
            rows.push_back(p);
            if (truth) truth->push_back(static_cast<std::uint32_t>(c));
        }
    }
    return matrix_from(rows);
}

// Partition agreement up to relabeling: exact match of co-membership would be
// overkill, majority vote per found cluster is enough for planted blobs.
double planted_accuracy(const std::vector<std::uint32_t>& found,
                        const std::vector<std::uint32_t>& truth) {
    std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> votes;
    for (std::size_t i = 0; i < found.size(); ++i) votes[found[i]][truth[i]]++;
    std::size_t hits = 0;
    for (const auto& [cluster, counts] : votes) {
        std::size_t best = 0;
        for (const auto& [label, n] : counts) best = std::max(best, n);
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(found.size());
}

}  // namespace

TEST_SUITE("cluster") {

TEST_CASE("kmeans: forced optimum on 1-D style data") {
    const auto m = matrix_from({{0.0f, 0.0f}, {0.1f, 0.0f}, {10.0f, 0.0f}, {10.1f, 0.0f}});
    const auto c = kmeans(m, 2, 7);
    CHECK(c.assignments[0] == c.assignments[1]);
    CHECK(c.assignments[2] == c.assignments[3]);
    CHECK(c.assignments[0] != c.assignments[2]);
    const auto low = c.assignments[0];
    const auto high = c.assignments[2];
    CHECK(c.centroid(low)[0] == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(c.centroid(high)[0] == doctest::Approx(10.05).epsilon(1e-6));
    CHECK(c.sizes[low] == 2);
}

TEST_CASE("kmeans: k equals rows gives zero WCSS") {
    rng::Engine eng(3);
    const auto m = blobs(eng, 2, 4, 0.5);
    const auto c = kmeans(m, static_cast<std::uint32_t>(m.rows), 11);
    CHECK(wcss(m, c) == doctest::Approx(0.0).epsilon(1e-12));
    std::vector<bool> seen(m.rows, false);
    for (auto a : c.assignments) {
        CHECK_FALSE(seen[a]);
        seen[a] = true;
    }
}

TEST_CASE("kmeans recovers planted blobs in at least 9 of 10 seeds") {
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        rng::Engine eng(900 + seed);
        std::vector<std::uint32_t> truth;
        const auto m = blobs(eng, 3, 30, 0.3, &truth);
        const auto c = kmeans(m, 3, seed);
        if (planted_accuracy(c.assignments, truth) >= 0.99) ++good;
    }
    CHECK(good >= 9);
}

TEST_CASE("kmeans rejects bad inputs") {
    const auto m = matrix_from({{1, 0}, {0, 1}});
    CHECK_THROWS_AS(kmeans(m, 3, 0), DataError);
    CHECK_THROWS_AS(kmeans(m, 0, 0), DataError);
    auto bad = m;
    bad.data[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(kmeans(bad, 1, 0), NumericError);
}

TEST_CASE("kmeans determinism") {
    rng::Engine eng(4);
    const auto m = blobs(eng, 4, 20, 1.0);
    const auto a = kmeans(m, 4, 77);
    const auto b = kmeans(m, 4, 77);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("WCSS is non-increasing across Lloyd iterations") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        rng::Engine eng(50 + seed);
        const auto m = blobs(eng, 5, 25, 2.0);
        const auto c = kmeans(m, 5, seed);
        REQUIRE(!c.iteration_wcss.empty());
        for (std::size_t i = 1; i < c.iteration_wcss.size(); ++i) {
            CHECK(c.iteration_wcss[i] <= c.iteration_wcss[i - 1] + 1e-9);
        }
    }
}

TEST_CASE("wcss: trivial values and brute-force agreement") {
    SUBCASE("all points equal") {
        const auto m = matrix_from({{2, 2}, {2, 2}, {2, 2}});
        const auto c = kmeans(m, 1, 0);
        CHECK(wcss(m, c) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("hand case: points 0 and 2 around centroid 1") {
        const auto m = matrix_from({{0, 0}, {2, 0}});
        const auto c = kmeans(m, 1, 0);
        CHECK(c.centroid(0)[0] == doctest::Approx(1.0));
        CHECK(wcss(m, c) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(wcss(m, c, false) == doctest::Approx(2.0).epsilon(1e-12));  // sqrt(1)+sqrt(1)
    }
    SUBCASE("random instance matches an independent double loop") {
        rng::Engine eng(6);
        const auto m = blobs(eng, 3, 15, 1.5);
        const auto c = kmeans(m, 3, 9);
        double expect = 0.0;
        for (std::size_t p = 0; p < m.rows; ++p) {
            const auto row = m.row(p);
            const auto cen = c.centroid(c.assignments[p]);
            for (std::size_t i = 0; i < m.dim; ++i) {
                expect += (double(row[i]) - cen[i]) * (double(row[i]) - cen[i]);
            }
        }
        CHECK(wcss(m, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("WCSS is invariant under cluster relabeling") {
    rng::Engine eng(7);
    const auto m = blobs(eng, 3, 10, 1.0);
    auto c = kmeans(m, 3, 1);
    const double base = wcss(m, c);
    // swap labels 0 and 1 everywhere
    Clustering swapped = c;
    for (auto& a : swapped.assignments) a = a == 0 ? 1 : (a == 1 ? 0 : a);
    for (std::size_t i = 0; i < m.dim; ++i) {
        std::swap(swapped.centroids[0 * m.dim + i], swapped.centroids[1 * m.dim + i]);
    }
    std::swap(swapped.sizes[0], swapped.sizes[1]);
    CHECK(wcss(m, swapped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("wcss at k+1 does not exceed wcss at k (solver tolerance)") {
    rng::Engine eng(8);
    const auto m = blobs(eng, 4, 25, 2.0);
    double prev = std::numeric_limits<double>::infinity();
    for (std::uint32_t k = 1; k <= 8; ++k) {
        const double w = wcss(m, kmeans(m, k, 123));
        CHECK(w <= prev * 1.05 + 1e-9);
        prev = w;
    }
}

TEST_CASE("elbow recovers planted k = 3") {
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        rng::Engine eng(300 + seed);
        const auto m = blobs(eng, 3, 30, 0.4);
        const auto report = elbow_select_k(m, {1, 2, 3, 4, 5, 6, 7, 8}, seed);
        if (report.chosen_k == 3) ++good;
    }
    CHECK(good >= 9);
}

TEST_CASE("elbow recovers planted k = 5") {
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        rng::Engine eng(500 + seed);
        const auto m = blobs(eng, 5, 25, 0.4);
        const auto report = elbow_select_k(m, {2, 3, 4, 5, 6, 7, 8, 9, 10}, seed);
        if (report.chosen_k == 5) ++good;
    }
    CHECK(good >= 9);
}

TEST_CASE("elbow flags a flat curve as degenerate") {
    const auto m = matrix_from({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
    const auto report = elbow_select_k(m, {1, 2, 3}, 0);
    CHECK(report.degenerate);
    CHECK(report.chosen_k == 1);
}

TEST_CASE("elbow validates its grid") {
    const auto m = matrix_from({{1, 0}, {0, 1}, {1, 1}});
    CHECK_THROWS_AS(elbow_select_k(m, {1, 2}, 0), ConfigError);
    CHECK_THROWS_AS(elbow_select_k(m, {2, 1, 3}, 0), ConfigError);
}

TEST_CASE("clustering file round-trip") {
    TempDir tmp;
    rng::Engine eng(10);
    const auto m = blobs(eng, 3, 12, 1.0);
    const auto c = kmeans(m, 3, 5);
    const auto path = tmp.file("c.eqcl");
    save_clustering(c, path);
    const auto loaded = load_clustering(path);
    CHECK(loaded.k == c.k);
    CHECK(loaded.dim == c.dim);
    CHECK(loaded.assignments == c.assignments);
    CHECK(loaded.centroids == c.centroids);
    CHECK(loaded.sizes == c.sizes);

    // truncation is detected
    const auto bytes = read_file(path);
    write_file(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_clustering(path), DataError);
}

}  // TEST_SUITE
