#include "equal/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "equal/common.hpp"
#include "equal/error.hpp"

namespace equal::cluster {

namespace {

double sq_dist(std::span<const float> a, const float* b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        d += diff * diff;
    }
    return d;
}

// k-means++: first centroid uniform, the rest D^2-sampled.
std::vector<float> seed_centroids(const embed::EmbeddingMatrix& m, std::uint32_t k,
                                  rng::Engine& eng) {
    const std::size_t n = m.rows, dim = m.dim;
    std::vector<float> centroids(static_cast<std::size_t>(k) * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    std::size_t first = rng::uniform_index(eng, n);
    std::memcpy(centroids.data(), m.data.data() + first * dim, dim * sizeof(float));

    for (std::uint32_t c = 1; c < k; ++c) {
        const float* prev = centroids.data() + (c - 1) * static_cast<std::size_t>(dim);
        double total = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            d2[p] = std::min(d2[p], sq_dist(m.row(p), prev));
            total += d2[p];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng::uniform01(eng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t p = 0; p < n; ++p) {
                acc += d2[p];
                if (acc >= r) { pick = p; break; }
            }
        } else {
            pick = rng::uniform_index(eng, n);  // all points identical
        }
        std::memcpy(centroids.data() + c * static_cast<std::size_t>(dim),
                    m.data.data() + pick * dim, dim * sizeof(float));
    }
    return centroids;
}

}  // namespace

Clustering kmeans(const embed::EmbeddingMatrix& m, std::uint32_t k, std::uint64_t seed,
                  int max_iters) {
    if (m.rows == 0) throw DataError("kmeans: empty matrix");
    if (k < 1 || k > m.rows) {
        throw DataError("kmeans: k=" + std::to_string(k) + " out of range for " +
                        std::to_string(m.rows) + " rows");
    }
    for (float x : m.data) {
        if (!std::isfinite(x)) throw NumericError("kmeans: non-finite input");
    }
    const std::size_t n = m.rows, dim = m.dim;
    rng::Engine eng(seed);

    Clustering out;
    out.k = k;
    out.dim = dim;
    out.centroids = seed_centroids(m, k, eng);
    out.assignments.assign(n, 0);
    out.sizes.assign(k, 0);

    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    for (int iter = 0; iter < max_iters; ++iter) {
        // assignment step; ties go to the lowest cluster id
        bool changed = iter == 0;
        for (std::size_t p = 0; p < n; ++p) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_c = 0;
            for (std::uint32_t c = 0; c < k; ++c) {
                const double d = sq_dist(m.row(p), out.centroids.data() + c * dim);
                if (d < best) { best = d; best_c = c; }
            }
            if (out.assignments[p] != best_c) {
                out.assignments[p] = best_c;
                changed = true;
            }
        }

        // repair: hand the globally farthest point to each empty cluster
        std::fill(out.sizes.begin(), out.sizes.end(), 0);
        for (std::uint32_t a : out.assignments) out.sizes[a]++;
        for (std::uint32_t c = 0; c < k; ++c) {
            if (out.sizes[c] > 0) continue;
            double worst = -1.0;
            std::size_t worst_p = 0;
            for (std::size_t p = 0; p < n; ++p) {
                if (out.sizes[out.assignments[p]] <= 1) continue;  // keep donors non-empty
                const double d = sq_dist(m.row(p), out.centroids.data() + out.assignments[p] * dim);
                if (d > worst) { worst = d; worst_p = p; }
            }
            out.sizes[out.assignments[worst_p]]--;
            out.assignments[worst_p] = c;
            out.sizes[c] = 1;
            changed = true;
        }

        // centroid update, fixed ascending-point accumulation order
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            double* dst = sums.data() + out.assignments[p] * dim;
            const auto row = m.row(p);
            for (std::size_t i = 0; i < dim; ++i) dst[i] += row[i];
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            const double inv = 1.0 / static_cast<double>(out.sizes[c]);
            float* dst = out.centroids.data() + c * static_cast<std::size_t>(dim);
            const double* src = sums.data() + c * static_cast<std::size_t>(dim);
            for (std::size_t i = 0; i < dim; ++i) dst[i] = static_cast<float>(src[i] * inv);
        }

        out.iteration_wcss.push_back(wcss(m, out));
        if (!changed) break;
    }
    return out;
}

double wcss(const embed::EmbeddingMatrix& m, const Clustering& clustering, bool squared) {
    if (clustering.assignments.size() != m.rows || clustering.dim != m.dim) {
        throw DataError("wcss: clustering inconsistent with matrix");
    }
    double total = 0.0;
    for (std::size_t p = 0; p < m.rows; ++p) {
        const double d = sq_dist(m.row(p), clustering.centroids.data() + clustering.assignments[p] * m.dim);
        total += squared ? d : std::sqrt(d);
    }
    return total;
}

KSelectionReport elbow_select_k(const embed::EmbeddingMatrix& m,
                                const std::vector<std::uint32_t>& k_grid, std::uint64_t seed,
                                int max_iters) {
    if (k_grid.size() < 3) throw ConfigError("elbow_select_k needs at least 3 candidates");
    for (std::size_t i = 1; i < k_grid.size(); ++i) {
        if (k_grid[i] <= k_grid[i - 1]) throw ConfigError("elbow_select_k grid must be ascending");
    }
    KSelectionReport report;
    report.k_grid = k_grid;
    for (std::uint32_t k : k_grid) {
        report.wcss_values.push_back(wcss(m, kmeans(m, k, rng::mix(seed, k), max_iters)));
    }
    const double w0 = report.wcss_values.front();
    const double w1 = report.wcss_values.back();
    const double span = w0 - w1;
    if (std::abs(span) < 1e-12 * std::max(1.0, std::abs(w0))) {
        report.degenerate = true;
        report.chosen_k = k_grid.front();
        return report;
    }
    // Perpendicular distance to the chord is a fixed multiple of the vertical
    // gap chord(k) - wcss(k), so the argmax is the same.
    const double x0 = k_grid.front(), x1 = k_grid.back();
    double best_gap = -std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < k_grid.size(); ++i) {
        const double t = (static_cast<double>(k_grid[i]) - x0) / (x1 - x0);
        const double chord = w0 + t * (w1 - w0);
        const double gap = chord - report.wcss_values[i];
        if (gap > best_gap) {
            best_gap = gap;
            best_i = i;
        }
    }
    report.chosen_k = k_grid[best_i];
    return report;
}

namespace {

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated clustering file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_clustering(const Clustering& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write("EQCL", 4);
    write_u32le(out, 1);
    write_u32le(out, c.k);
    write_u32le(out, static_cast<std::uint32_t>(c.assignments.size()));
    for (std::uint32_t a : c.assignments) write_u32le(out, a);

    embed::EmbeddingMatrix centroids;
    centroids.rows = c.k;
    centroids.dim = c.dim;
    centroids.data = c.centroids;
    for (std::uint32_t i = 0; i < c.k; ++i) centroids.ids.push_back("c" + std::to_string(i));
    out.write("EQEM", 4);
    write_u32le(out, 1);
    write_u32le(out, static_cast<std::uint32_t>(centroids.rows));
    write_u32le(out, static_cast<std::uint32_t>(centroids.dim));
    out.write(reinterpret_cast<const char*>(centroids.data.data()),
              static_cast<std::streamsize>(centroids.data.size() * sizeof(float)));
    for (const auto& id : centroids.ids) out << id << '\n';
    if (!out) throw DataError("write failed for " + path);
}

Clustering load_clustering(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EQCL", 4) != 0) {
        throw DataError(path + ": not an EQCL clustering file");
    }
    const std::uint32_t version = read_u32le(in, path);
    if (version != 1) throw DataError(path + ": unsupported EQCL version");
    Clustering c;
    c.k = read_u32le(in, path);
    const std::uint32_t rows = read_u32le(in, path);
    c.assignments.resize(rows);
    for (std::uint32_t& a : c.assignments) {
        a = read_u32le(in, path);
        if (a >= c.k) throw DataError(path + ": assignment out of range");
    }
    if (!in.read(magic, 4) || std::memcmp(magic, "EQEM", 4) != 0) {
        throw DataError(path + ": missing centroid matrix");
    }
    if (read_u32le(in, path) != 1) throw DataError(path + ": unsupported centroid matrix version");
    const std::uint32_t crows = read_u32le(in, path);
    c.dim = read_u32le(in, path);
    if (crows != c.k) throw DataError(path + ": centroid count mismatch");
    c.centroids.resize(static_cast<std::size_t>(crows) * c.dim);
    if (!in.read(reinterpret_cast<char*>(c.centroids.data()),
                 static_cast<std::streamsize>(c.centroids.size() * sizeof(float)))) {
        throw DataError(path + ": truncated centroid payload");
    }
    c.sizes.assign(c.k, 0);
    for (std::uint32_t a : c.assignments) c.sizes[a]++;
    return c;
}

}  // namespace equal::cluster
