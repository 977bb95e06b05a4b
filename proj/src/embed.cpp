#include "equal/embed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "equal/common.hpp"
#include "equal/error.hpp"

namespace equal::embed {

using nlohmann::json;

void EmbeddingMatrix::normalize() {
    for (std::size_t r = 0; r < rows; ++r) {
        auto v = row(r);
        double ss = 0.0;
        for (float x : v) ss += static_cast<double>(x) * x;
        const double norm = std::sqrt(ss);
        if (norm < 1e-12) {
            throw NumericError("zero-norm embedding row \"" + (r < ids.size() ? ids[r] : std::to_string(r)) + "\"");
        }
        const float inv = static_cast<float>(1.0 / norm);
        for (float& x : v) x *= inv;
    }
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
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated matrix file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(sizeof(float) == 4, "32-bit floats required");

}  // namespace

void save_matrix(const EmbeddingMatrix& m, const std::string& path) {
    if (m.ids.size() != m.rows) throw DataError("matrix ids not row-aligned");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write("EQEM", 4);
    write_u32le(out, 1);
    write_u32le(out, static_cast<std::uint32_t>(m.rows));
    write_u32le(out, static_cast<std::uint32_t>(m.dim));
    // floats are IEEE-754 little-endian on every supported target
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    for (const auto& id : m.ids) out << id << '\n';
    if (!out) throw DataError("write failed for " + path);
}

EmbeddingMatrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EQEM", 4) != 0) {
        throw DataError(path + ": not an EQEM matrix file");
    }
    const std::uint32_t version = read_u32le(in, path);
    if (version != 1) throw DataError(path + ": unsupported EQEM version " + std::to_string(version));
    EmbeddingMatrix m;
    m.rows = read_u32le(in, path);
    m.dim = read_u32le(in, path);
    m.data.resize(m.rows * m.dim);
    if (!in.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(m.data.size() * sizeof(float)))) {
        throw DataError(path + ": truncated matrix payload");
    }
    std::string id;
    while (m.ids.size() < m.rows && std::getline(in, id)) m.ids.push_back(id);
    if (m.ids.size() != m.rows) throw DataError(path + ": truncated id section");
    return m;
}

double cosine_sim(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw NumericError("cosine_sim: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw NumericError("cosine_sim: zero-norm input");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// log(sum exp(x_i)) with the positive's score first.
double log_sum_exp(const std::vector<double>& xs) {
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

}  // namespace

double infonce_loss(std::span<const float> d, std::span<const float> q_pos,
                    const std::vector<std::span<const float>>& q_negs, double temperature) {
    if (temperature <= 0.0) throw NumericError("infonce_loss: temperature must be positive");
    const double s_pos = cosine_sim(d, q_pos);
    if (q_negs.empty()) return 0.0;
    std::vector<double> scaled;
    scaled.reserve(q_negs.size() + 1);
    scaled.push_back(s_pos / temperature);
    for (const auto& q : q_negs) scaled.push_back(cosine_sim(d, q) / temperature);
    return log_sum_exp(scaled) - s_pos / temperature;
}

namespace {

// d(cos(d,q))/dd = (q_hat - s * d_hat) / |d|
void add_cosine_grad(std::span<const float> d, std::span<const float> q, double coeff,
                     std::vector<double>& grad) {
    double dot = 0.0, nd2 = 0.0, nq2 = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        dot += static_cast<double>(d[i]) * q[i];
        nd2 += static_cast<double>(d[i]) * d[i];
        nq2 += static_cast<double>(q[i]) * q[i];
    }
    const double nd = std::sqrt(nd2), nq = std::sqrt(nq2);
    const double s = dot / (nd * nq);
    for (std::size_t i = 0; i < d.size(); ++i) {
        grad[i] += coeff * (q[i] / (nd * nq) - s * d[i] / nd2);
    }
}

}  // namespace

std::vector<double> infonce_grad(std::span<const float> d, std::span<const float> q_pos,
                                 const std::vector<std::span<const float>>& q_negs,
                                 double temperature) {
    if (temperature <= 0.0) throw NumericError("infonce_grad: temperature must be positive");
    std::vector<double> grad(d.size(), 0.0);
    if (q_negs.empty()) return grad;  // loss constant at 0

    const double s_pos = cosine_sim(d, q_pos);
    std::vector<double> s_neg(q_negs.size());
    for (std::size_t k = 0; k < q_negs.size(); ++k) s_neg[k] = cosine_sim(d, q_negs[k]);

    // softmax over [s_pos, s_negs] / tau
    double m = s_pos;
    for (double s : s_neg) m = std::max(m, s);
    double z = std::exp((s_pos - m) / temperature);
    std::vector<double> e(q_negs.size());
    for (std::size_t k = 0; k < q_negs.size(); ++k) {
        e[k] = std::exp((s_neg[k] - m) / temperature);
        z += e[k];
    }
    const double p_pos = std::exp((s_pos - m) / temperature) / z;

    add_cosine_grad(d, q_pos, (p_pos - 1.0) / temperature, grad);
    for (std::size_t k = 0; k < q_negs.size(); ++k) {
        add_cosine_grad(d, q_negs[k], (e[k] / z) / temperature, grad);
    }
    return grad;
}

Projection Projection::identity(std::size_t dim) {
    Projection p;
    p.dim_in = dim;
    p.dim_out = dim;
    p.weight.assign(dim * dim, 0.0f);
    for (std::size_t i = 0; i < dim; ++i) p.weight[i * dim + i] = 1.0f;
    return p;
}

bool Projection::is_identity() const {
    if (dim_in != dim_out) return false;
    for (std::size_t i = 0; i < dim_in; ++i) {
        for (std::size_t j = 0; j < dim_out; ++j) {
            if (weight[i * dim_out + j] != (i == j ? 1.0f : 0.0f)) return false;
        }
    }
    return true;
}

void save_projection(const Projection& p, const std::string& path) {
    EmbeddingMatrix m;
    m.rows = p.dim_in;
    m.dim = p.dim_out;
    m.data = p.weight;
    m.ids.reserve(p.dim_in);
    for (std::size_t i = 0; i < p.dim_in; ++i) m.ids.push_back("w" + std::to_string(i));
    save_matrix(m, path);
}

Projection load_projection(const std::string& path) {
    const EmbeddingMatrix m = load_matrix(path);
    Projection p;
    p.dim_in = m.rows;
    p.dim_out = m.dim;
    p.weight = m.data;
    return p;
}

namespace {

// y = x W, computed in double.
std::vector<double> project_row(std::span<const float> x, const std::vector<double>& w,
                                std::size_t dim_in, std::size_t dim_out) {
    std::vector<double> y(dim_out, 0.0);
    for (std::size_t i = 0; i < dim_in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wr = w.data() + i * dim_out;
        for (std::size_t j = 0; j < dim_out; ++j) y[j] += xi * wr[j];
    }
    return y;
}

}  // namespace

Projection train_projection(const WarmupPairSet& pairs, const ProjectionConfig& config) {
    const std::size_t n = pairs.doc_vecs.rows;
    if (n < 2) throw ConfigError("train_projection needs at least 2 positives");
    if (pairs.qa_vecs.rows != n) throw ConfigError("warm-up pair set rows misaligned");
    if (pairs.doc_vecs.dim != pairs.qa_vecs.dim) throw ConfigError("warm-up pair set dims differ");
    if (config.negatives < 1) throw ConfigError("train_projection needs negatives >= 1");

    const std::size_t dim = pairs.doc_vecs.dim;
    Projection out = Projection::identity(dim);
    out.config = config;
    if (config.epochs <= 0) return out;

    std::vector<double> w(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) w[i * dim + i] = 1.0;

    const std::size_t pool = pairs.qa_vecs.rows;
    const std::size_t n_neg = std::min<std::size_t>(static_cast<std::size_t>(config.negatives), pool - 1);

    std::vector<double> grad_w(dim * dim);
    std::vector<float> proj_f(dim);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng::Engine eng(rng::mix(config.seed, 0xe90cull + static_cast<std::uint64_t>(epoch)));
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double mean_loss = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            // negatives: uniform without replacement from the pool, skipping p
            std::vector<std::span<const float>> negs;
            negs.reserve(n_neg);
            auto picks = rng::sample_without_replacement(eng, pool - 1, n_neg);
            for (std::size_t raw : picks) {
                const std::size_t idx = raw >= p ? raw + 1 : raw;
                negs.push_back(pairs.qa_vecs.row(idx));
            }

            const auto x = pairs.doc_vecs.row(p);
            const auto y = project_row(x, w, dim, dim);
            for (std::size_t j = 0; j < dim; ++j) proj_f[j] = static_cast<float>(y[j]);
            std::span<const float> d(proj_f.data(), dim);

            mean_loss += infonce_loss(d, pairs.qa_vecs.row(p), negs, config.temperature);
            const auto g = infonce_grad(d, pairs.qa_vecs.row(p), negs, config.temperature);
            for (std::size_t i = 0; i < dim; ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                double* gr = grad_w.data() + i * dim;
                for (std::size_t j = 0; j < dim; ++j) gr[j] += xi * g[j];
            }
        }
        mean_loss /= static_cast<double>(n);
        if (!std::isfinite(mean_loss)) {
            throw NumericError("train_projection: non-finite loss at epoch " + std::to_string(epoch) +
                               "; reduce step_size");
        }
        const double scale = config.step_size / static_cast<double>(n);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * grad_w[i];
    }

    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i])) throw NumericError("train_projection: non-finite weight; reduce step_size");
        out.weight[i] = static_cast<float>(w[i]);
    }
    return out;
}

EmbeddingMatrix apply_projection(const Projection& p, const EmbeddingMatrix& m) {
    if (p.dim_in != m.dim) throw NumericError("apply_projection: dimension mismatch");
    EmbeddingMatrix out;
    out.rows = m.rows;
    out.dim = p.dim_out;
    out.ids = m.ids;
    out.data.resize(m.rows * p.dim_out);
    std::vector<double> w(p.weight.begin(), p.weight.end());
    for (std::size_t r = 0; r < m.rows; ++r) {
        const auto y = project_row(m.row(r), w, p.dim_in, p.dim_out);
        double ss = 0.0;
        for (double v : y) ss += v * v;
        const double norm = std::sqrt(ss);
        if (norm < 1e-12) {
            throw NumericError("apply_projection: degenerate row \"" +
                               (r < m.ids.size() ? m.ids[r] : std::to_string(r)) + "\"");
        }
        auto dst = out.row(r);
        for (std::size_t j = 0; j < p.dim_out; ++j) dst[j] = static_cast<float>(y[j] / norm);
    }
    return out;
}

EmbeddingMatrix HashEmbedder::embed(const std::vector<std::string>& texts,
                                    const std::vector<std::string>& ids) {
    EmbeddingMatrix m;
    m.rows = texts.size();
    m.dim = dim_;
    m.ids = ids;
    m.data.assign(m.rows * m.dim, 0.0f);
    for (std::size_t r = 0; r < texts.size(); ++r) {
        auto tokens = tokenize(texts[r]);
        if (tokens.empty()) tokens.push_back("");  // degenerate text still embeds
        auto row = m.row(r);
        for (const auto& tok : tokens) {
            const std::uint64_t h = fnv1a(tok);
            const std::size_t slot = static_cast<std::size_t>(h % dim_);
            const float sign = (h >> 63) ? -1.0f : 1.0f;
            row[slot] += sign;
        }
    }
    m.normalize();
    return m;
}

EmbeddingMatrix HttpEmbedder::embed(const std::vector<std::string>& texts,
                                    const std::vector<std::string>& ids) {
    EmbeddingMatrix m;
    m.ids = ids;
    m.rows = 0;
    const UrlParts url = split_url(config_.base_url);
    httplib::Client client(url.base.c_str());
    client.set_read_timeout(config_.timeout_s, 0);
    client.set_connection_timeout(config_.timeout_s, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    for (std::size_t off = 0; off < texts.size(); off += config_.batch_size) {
        const std::size_t end = std::min(texts.size(), off + config_.batch_size);
        json body;
        body["input"] = json::array();
        for (std::size_t i = off; i < end; ++i) body["input"].push_back(texts[i]);
        const std::string payload = body.dump();

        httplib::Result res;
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
            }
            res = client.Post(url.path_prefix + "/embeddings", headers, payload, "application/json");
            if (res && res->status == 200) break;
            last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        }
        if (!res || res->status != 200) {
            throw TransportError("embedding provider failed after retries: " + last_error);
        }
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw TransportError(std::string("embedding provider returned invalid JSON: ") + e.what());
        }
        if (!reply.contains("data") || !reply["data"].is_array() ||
            reply["data"].size() != end - off) {
            throw TransportError("embedding provider returned wrong row count");
        }
        for (const auto& item : reply["data"]) {
            const auto& vec = item.at("embedding");
            if (dim_ == 0) dim_ = vec.size();
            if (vec.size() != dim_) throw TransportError("embedding dim mismatch across batches");
            for (const auto& v : vec) m.data.push_back(v.get<float>());
            ++m.rows;
        }
    }
    m.dim = dim_;
    m.normalize();
    return m;
}

EmbeddingMatrix embed_texts(Embedder& provider, const std::vector<std::string>& texts,
                            const std::vector<std::string>& ids) {
    if (texts.size() != ids.size()) throw ConfigError("embed_texts: ids not aligned with texts");
    return provider.embed(texts, ids);
}

}  // namespace equal::embed
