#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace equal::embed {

// Row-major float32 matrix with row-aligned ids.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> data;
    std::vector<std::string> ids;

    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

    // L2-normalizes every row in place; zero-norm rows raise NumericError
    // naming the row id.
    void normalize();
};

// Binary format: "EQEM", u32le version=1, u32le rows, u32le dim, rows*dim
// f32le row-major, then ids one per line. Round-trip is bit-exact.
void save_matrix(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix load_matrix(const std::string& path);

double cosine_sim(std::span<const float> a, std::span<const float> b);

// -log( e^{s+/tau} / (e^{s+/tau} + sum_k e^{s-_k/tau}) ), s = cosine_sim.
// Zero without negatives.
double infonce_loss(std::span<const float> d, std::span<const float> q_pos,
                    const std::vector<std::span<const float>>& q_negs, double temperature);

// Analytic gradient of infonce_loss with respect to d.
std::vector<double> infonce_grad(std::span<const float> d, std::span<const float> q_pos,
                                 const std::vector<std::span<const float>>& q_negs,
                                 double temperature);

struct ProjectionConfig {
    int epochs = 30;
    double step_size = 0.05;
    int negatives = 15;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

// Linear map over frozen provider embeddings; identity at initialization.
struct Projection {
    std::size_t dim_in = 0;
    std::size_t dim_out = 0;
    std::vector<float> weight;  // row-major dim_in x dim_out
    ProjectionConfig config;

    static Projection identity(std::size_t dim);
    bool is_identity() const;
};

void save_projection(const Projection& p, const std::string& path);
Projection load_projection(const std::string& path);

// Positive i is (doc_vecs.row(i), qa_vecs.row(i)); doc rows repeat when one
// document yielded several pairs. qa_vecs doubles as the negative pool.
struct WarmupPairSet {
    EmbeddingMatrix doc_vecs;
    EmbeddingMatrix qa_vecs;
};

// Full-batch gradient descent on mean InfoNCE. Negatives are resampled each
// epoch from the pool (excluding the positive's own row), reseeded from
// config.seed, so training is bit-deterministic.
Projection train_projection(const WarmupPairSet& pairs, const ProjectionConfig& config);

// Rows mapped through the weight matrix, then L2-normalized.
EmbeddingMatrix apply_projection(const Projection& p, const EmbeddingMatrix& m);

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual EmbeddingMatrix embed(const std::vector<std::string>& texts,
                                  const std::vector<std::string>& ids) = 0;
    virtual std::size_t dim() const = 0;
};

// Deterministic bag-of-tokens embedder: each token hashes to one slot with a
// hashed sign, rows L2-normalized.
class HashEmbedder final : public Embedder {
  public:
    explicit HashEmbedder(std::size_t dim) : dim_(dim) {}
    EmbeddingMatrix embed(const std::vector<std::string>& texts,
                          const std::vector<std::string>& ids) override;
    std::size_t dim() const override { return dim_; }

  private:
    std::size_t dim_;
};

struct HttpEmbedderConfig {
    std::string base_url;  // e.g. http://host:port/v1 ; POSTs to <base>/embeddings
    std::string api_key;
    int retries = 3;
    int backoff_ms = 1000;
    int timeout_s = 60;
    std::size_t batch_size = 64;
};

// POST {"input": [texts...]} -> {"data": [{"embedding": [...]}, ...]},
// order-preserving.
class HttpEmbedder final : public Embedder {
  public:
    explicit HttpEmbedder(HttpEmbedderConfig config) : config_(std::move(config)) {}
    EmbeddingMatrix embed(const std::vector<std::string>& texts,
                          const std::vector<std::string>& ids) override;
    std::size_t dim() const override { return dim_; }

  private:
    HttpEmbedderConfig config_;
    std::size_t dim_ = 0;  // learned from the first response
};

EmbeddingMatrix embed_texts(Embedder& provider, const std::vector<std::string>& texts,
                            const std::vector<std::string>& ids);

}  // namespace equal::embed
