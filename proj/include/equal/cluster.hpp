#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "equal/embed.hpp"

namespace equal::cluster {

struct Clustering {
    std::uint32_t k = 0;
    std::size_t dim = 0;
    std::vector<std::uint32_t> assignments;  // doc row -> cluster id
    std::vector<float> centroids;            // row-major k x dim
    std::vector<std::uint32_t> sizes;
    std::vector<double> iteration_wcss;  // end-of-iteration objective trace

    std::span<const float> centroid(std::uint32_t c) const { return {centroids.data() + c * dim, dim}; }
};

// Lloyd's algorithm with k-means++ seeding. Deterministic given (m, k, seed).
// Empty clusters are repaired by moving in the point farthest from its
// centroid, so k stays fixed.
Clustering kmeans(const embed::EmbeddingMatrix& m, std::uint32_t k, std::uint64_t seed,
                  int max_iters = 100);

// Within-cluster sum of squared distances; set squared=false for the plain
// distance-sum variant.
double wcss(const embed::EmbeddingMatrix& m, const Clustering& clustering, bool squared = true);

struct KSelectionReport {
    std::vector<std::uint32_t> k_grid;
    std::vector<double> wcss_values;
    std::uint32_t chosen_k = 0;
    bool degenerate = false;  // flat WCSS curve; fell back to the smallest k
};

// Knee of the WCSS curve: the grid point with the largest perpendicular
// distance to the chord between the first and last (k, WCSS) points, ties to
// the smaller k.
KSelectionReport elbow_select_k(const embed::EmbeddingMatrix& m,
                                const std::vector<std::uint32_t>& k_grid, std::uint64_t seed,
                                int max_iters = 100);

// Binary format: "EQCL", u32le version=1, u32le k, u32le rows, rows u32le
// assignments, then the centroid matrix in the EQEM layout.
void save_clustering(const Clustering& c, const std::string& path);
Clustering load_clustering(const std::string& path);

}  // namespace equal::cluster
