#include "equal/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "equal/common.hpp"
#include "equal/error.hpp"
#include "equal/synth.hpp"

namespace equal::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class PhaseTimer {
  public:
    explicit PhaseTimer(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
    ~PhaseTimer() {
        sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    double& sink_;
    std::chrono::steady_clock::time_point start_;
};

int phase_rank(const std::string& phase) {
    if (phase == "init") return 0;
    if (phase == "warmup") return 1;
    if (phase == "cluster") return 2;
    if (phase == "pull") return 3;
    if (phase == "done") return 4;
    throw DataError("unknown phase \"" + phase + "\"");
}

}  // namespace

std::string pool_path(const std::string& out_dir) { return out_dir + "/pool.eqpool"; }
std::string state_path(const std::string& out_dir) { return out_dir + "/state.json"; }
std::string projection_path(const std::string& out_dir) { return out_dir + "/projection.eqem"; }
std::string clustering_file_path(const std::string& out_dir) { return out_dir + "/clustering.eqcl"; }

void RunConfig::validate() const {
    if (docs_path.empty()) throw ConfigError("missing documents path");
    if (ref_path.empty()) throw ConfigError("missing reference path");
    if (out_dir.empty()) throw ConfigError("missing output directory");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup_ratio must be in [0, 1)");
    if (ngram_n < 2) throw ConfigError("ngram_n must be >= 2");
    if (embed_dim < 8) throw ConfigError("embed_dim must be >= 8");
    if (provider != "hash" && provider != "http") throw ConfigError("provider must be hash or http");
    if (mode != "full" && mode != "no_cl" && mode != "no_mab" && mode != "no_ot" && mode != "random") {
        throw ConfigError("mode must be one of full, no_cl, no_mab, no_ot, random");
    }
    if (budget_unit != "docs" && budget_unit != "pairs") {
        throw ConfigError("budget_unit must be docs or pairs");
    }
    if (!fs::exists(docs_path)) throw ConfigError("documents path does not exist: " + docs_path);
    if (!fs::exists(ref_path)) throw ConfigError("reference path does not exist: " + ref_path);
    if (!labels_path.empty() && !fs::exists(labels_path)) {
        throw ConfigError("labels path does not exist: " + labels_path);
    }
    if (!clustering_path.empty() && !fs::exists(clustering_path)) {
        throw ConfigError("clustering path does not exist: " + clustering_path);
    }
    extractor.validate();
}

std::vector<std::string> RunConfig::echo_lines() const {
    std::vector<std::string> lines;
    const auto add = [&](const std::string& k, const std::string& v) { lines.push_back(k + " = " + v); };
    add("batch_size", std::to_string(batch_size));
    add("budget_unit", budget_unit);
    add("clustering", clustering_path);
    add("docs", docs_path);
    add("embed_dim", std::to_string(embed_dim));
    add("extractor", extractor.kind == extract::ExtractorKind::mock ? "mock" : "http");
    add("extractor_backoff_ms", std::to_string(extractor.backoff_ms));
    add("extractor_char_cap", std::to_string(extractor.doc_char_cap));
    add("extractor_endpoint", extractor.endpoint);
    add("extractor_fanout", std::to_string(extractor.fanout));
    add("extractor_max_pairs", std::to_string(extractor.max_pairs));
    add("extractor_model", extractor.model);
    add("extractor_refine", extractor.refine ? "true" : "false");
    add("extractor_refine_template", extractor.refine_template_id);
    add("extractor_retries", std::to_string(extractor.retries));
    add("extractor_template", extractor.template_id);
    add("extractor_timeout_s", std::to_string(extractor.timeout_s));
    add("gamma", fmt_double(gamma));
    {
        std::string grid;
        for (std::size_t i = 0; i < k_grid.size(); ++i) {
            if (i) grid += ',';
            grid += std::to_string(k_grid[i]);
        }
        add("k_grid", grid);
    }
    add("k", std::to_string(k));
    add("kmeans_max_iters", std::to_string(kmeans_max_iters));
    add("labels", labels_path);
    add("mode", mode);
    add("ngram_n", std::to_string(ngram_n));
    add("ot_epsilon", fmt_double(ot.epsilon));
    add("ot_exact_cap", std::to_string(ot.exact_cells_cap));
    add("ot_max_iters", std::to_string(ot.max_iters));
    add("ot_point_cap", std::to_string(ot.point_cap));
    add("provider", provider);
    add("provider_url", provider_url);
    add("reference", ref_path);
    add("seed", std::to_string(seed));
    add("warmup_epochs", std::to_string(warmup.epochs));
    add("warmup_negatives", std::to_string(warmup.negatives));
    add("warmup_ratio", fmt_double(warmup_ratio));
    add("warmup_step", fmt_double(warmup.step_size));
    add("warmup_temperature", fmt_double(warmup.temperature));
    std::sort(lines.begin(), lines.end());
    // excluded from the hash; appended after sorting
    lines.push_back("max_pulls = " + std::to_string(max_pulls));
    lines.push_back("out_dir = " + out_dir);
    lines.push_back("resume = " + std::string(resume ? "true" : "false"));
    return lines;
}

std::string RunConfig::hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& line : echo_lines()) {
        if (line.rfind("max_pulls", 0) == 0 || line.rfind("out_dir", 0) == 0 ||
            line.rfind("resume", 0) == 0) {
            continue;
        }
        h = fnv1a(line, h);
        h = fnv1a("\n", h);
    }
    return to_hex(h);
}

void apply_config_line(RunConfig& config, const std::string& key, const std::string& value) {
    const auto to_u64 = [&](const std::string& v) -> std::uint64_t {
        try {
            return std::stoull(v);
        } catch (const std::exception&) {
            throw ConfigError("invalid integer for " + key + ": " + v);
        }
    };
    const auto to_int = [&](const std::string& v) -> int {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw ConfigError("invalid integer for " + key + ": " + v);
        }
    };
    const auto to_dbl = [&](const std::string& v) -> double {
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw ConfigError("invalid number for " + key + ": " + v);
        }
    };
    if (key == "docs") config.docs_path = value;
    else if (key == "reference") config.ref_path = value;
    else if (key == "out_dir") config.out_dir = value;
    else if (key == "labels") config.labels_path = value;
    else if (key == "clustering") config.clustering_path = value;
    else if (key == "gamma") config.gamma = to_dbl(value);
    else if (key == "batch_size") config.batch_size = to_int(value);
    else if (key == "warmup_ratio") config.warmup_ratio = to_dbl(value);
    else if (key == "warmup_epochs") config.warmup.epochs = to_int(value);
    else if (key == "warmup_step") config.warmup.step_size = to_dbl(value);
    else if (key == "warmup_negatives") config.warmup.negatives = to_int(value);
    else if (key == "warmup_temperature") config.warmup.temperature = to_dbl(value);
    else if (key == "k") config.k = static_cast<std::uint32_t>(to_u64(value));
    else if (key == "k_grid") {
        config.k_grid.clear();
        std::istringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) config.k_grid.push_back(static_cast<std::uint32_t>(to_u64(item)));
        }
    } else if (key == "kmeans_max_iters") config.kmeans_max_iters = to_int(value);
    else if (key == "ngram_n") config.ngram_n = to_u64(value);
    else if (key == "embed_dim") config.embed_dim = to_u64(value);
    else if (key == "provider") config.provider = value;
    else if (key == "provider_url") config.provider_url = value;
    else if (key == "mode") config.mode = value;
    else if (key == "budget_unit") config.budget_unit = value;
    else if (key == "seed") config.seed = to_u64(value);
    else if (key == "ot_epsilon") config.ot.epsilon = to_dbl(value);
    else if (key == "ot_max_iters") config.ot.max_iters = to_int(value);
    else if (key == "ot_exact_cap") config.ot.exact_cells_cap = to_u64(value);
    else if (key == "ot_point_cap") config.ot.point_cap = to_u64(value);
    else if (key == "extractor") {
        if (value == "mock") config.extractor.kind = extract::ExtractorKind::mock;
        else if (value == "http") config.extractor.kind = extract::ExtractorKind::http;
        else throw ConfigError("extractor must be mock or http");
    } else if (key == "extractor_endpoint") config.extractor.endpoint = value;
    else if (key == "extractor_model") config.extractor.model = value;
    else if (key == "extractor_template") config.extractor.template_id = value;
    else if (key == "extractor_refine_template") config.extractor.refine_template_id = value;
    else if (key == "extractor_max_pairs") config.extractor.max_pairs = to_int(value);
    else if (key == "extractor_retries") config.extractor.retries = to_int(value);
    else if (key == "extractor_backoff_ms") config.extractor.backoff_ms = to_int(value);
    else if (key == "extractor_timeout_s") config.extractor.timeout_s = to_int(value);
    else if (key == "extractor_char_cap") config.extractor.doc_char_cap = to_u64(value);
    else if (key == "extractor_fanout") config.extractor.fanout = to_int(value);
    else if (key == "extractor_refine") config.extractor.refine = value == "true" || value == "1";
    else throw ConfigError("unknown configuration key \"" + key + "\"");
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    RunConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        const auto eq = line.find('=');
        std::string key, value;
        if (eq != std::string::npos) {
            key = line.substr(0, eq);
            value = line.substr(eq + 1);
        } else {
            key = line;
        }
        const auto strip = [](std::string& s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        };
        strip(key);
        strip(value);
        if (key.empty()) continue;
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        apply_config_line(config, key, value);
    }
    return config;
}

namespace {

json pull_to_json(const PullRecord& p) {
    json rec;
    rec["pull"] = p.pull;
    rec["cluster_id"] = p.cluster_id;
    rec["ds_score"] = std::isnan(p.ds_score) ? json() : json(p.ds_score);
    rec["ot_cost"] = std::isnan(p.ot_cost) ? json() : json(p.ot_cost);
    rec["reward"] = p.reward;
    rec["pool_pairs"] = p.pool_pairs;
    rec["docs_sampled"] = p.docs_sampled;
    return rec;
}

PullRecord pull_from_json(const json& rec) {
    PullRecord p;
    p.pull = rec.at("pull").get<std::uint64_t>();
    p.cluster_id = rec.at("cluster_id").get<int>();
    p.ds_score = rec.at("ds_score").is_null() ? kNaN : rec.at("ds_score").get<double>();
    p.ot_cost = rec.at("ot_cost").is_null() ? kNaN : rec.at("ot_cost").get<double>();
    p.reward = rec.at("reward").get<double>();
    p.pool_pairs = rec.at("pool_pairs").get<std::uint64_t>();
    p.docs_sampled = rec.at("docs_sampled").get<std::uint64_t>();
    return p;
}

}  // namespace

void save_state(const RunState& state, const std::string& path) {
    json doc;
    doc["version"] = 1;
    doc["config_hash"] = state.config_hash;
    doc["phase"] = state.phase;
    doc["docs_sampled"] = state.docs_sampled;
    doc["consumed_docs"] = state.consumed_docs;
    json arms = json::array();
    for (const auto& arm : state.bandit.arms) {
        json a;
        a["cluster_id"] = arm.cluster_id;
        a["pulls"] = arm.pulls;
        a["reward"] = arm.reward.has_value() ? json(*arm.reward) : json();
        a["docs_remaining"] = arm.docs_remaining;
        a["exhausted"] = arm.exhausted;
        arms.push_back(std::move(a));
    }
    doc["bandit"] = {{"total_pulls", state.bandit.total_pulls},
                     {"seed", state.bandit.rng_seed},
                     {"arms", std::move(arms)}};
    json pulls = json::array();
    for (const auto& p : state.pulls) pulls.push_back(pull_to_json(p));
    doc["pulls"] = std::move(pulls);
    doc["ledger"] = {{"llm_calls", state.ledger.llm_calls},
                     {"prompt_tokens", state.ledger.prompt_tokens},
                     {"completion_tokens", state.ledger.completion_tokens},
                     {"ot_evaluations", state.ledger.ot_evaluations},
                     {"warmup_s", state.ledger.warmup_s},
                     {"cluster_s", state.ledger.cluster_s},
                     {"loop_s", state.ledger.loop_s}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("write failed for " + path);
}

RunState load_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw DataError(path + ": corrupted state file: " + e.what());
    }
    RunState state;
    state.config_hash = doc.at("config_hash").get<std::string>();
    state.phase = doc.at("phase").get<std::string>();
    phase_rank(state.phase);
    state.docs_sampled = doc.at("docs_sampled").get<std::uint64_t>();
    for (const auto& id : doc.at("consumed_docs")) state.consumed_docs.insert(id.get<std::string>());
    const auto& b = doc.at("bandit");
    state.bandit.total_pulls = b.at("total_pulls").get<std::uint64_t>();
    state.bandit.rng_seed = b.at("seed").get<std::uint64_t>();
    for (const auto& a : b.at("arms")) {
        bandit::ArmStats arm;
        arm.cluster_id = a.at("cluster_id").get<std::uint32_t>();
        arm.pulls = a.at("pulls").get<std::uint64_t>();
        if (!a.at("reward").is_null()) arm.reward = a.at("reward").get<double>();
        arm.docs_remaining = a.at("docs_remaining").get<std::uint64_t>();
        arm.exhausted = a.at("exhausted").get<bool>();
        state.bandit.arms.push_back(arm);
    }
    for (const auto& p : doc.at("pulls")) state.pulls.push_back(pull_from_json(p));
    const auto& ledger = doc.at("ledger");
    state.ledger.llm_calls = ledger.at("llm_calls").get<std::uint64_t>();
    state.ledger.prompt_tokens = ledger.at("prompt_tokens").get<std::uint64_t>();
    state.ledger.completion_tokens = ledger.at("completion_tokens").get<std::uint64_t>();
    state.ledger.ot_evaluations = ledger.at("ot_evaluations").get<std::uint64_t>();
    state.ledger.warmup_s = ledger.at("warmup_s").get<double>();
    state.ledger.cluster_s = ledger.at("cluster_s").get<double>();
    state.ledger.loop_s = ledger.at("loop_s").get<double>();
    return state;
}

void write_report_files(const Report& report, const std::string& out_dir) {
    {
        std::ofstream csv(out_dir + "/pulls.csv", std::ios::binary);
        if (!csv) throw DataError("cannot write " + out_dir + "/pulls.csv");
        csv << "pull,cluster_id,ds_score,ot_cost,reward,pool_pairs,docs_sampled\n";
        for (const auto& p : report.pulls) {
            csv << p.pull << ',' << p.cluster_id << ',';
            if (std::isnan(p.ds_score)) csv << "nan"; else csv << fmt_double(p.ds_score);
            csv << ',';
            if (std::isnan(p.ot_cost)) csv << "nan"; else csv << fmt_double(p.ot_cost);
            csv << ',' << fmt_double(p.reward) << ',' << p.pool_pairs << ',' << p.docs_sampled << '\n';
        }
    }
    json doc;
    doc["config"] = report.config_echo;
    doc["total_pulls"] = report.total_pulls;
    doc["docs_sampled"] = report.docs_sampled;
    doc["pool_pairs"] = report.pool_pairs;
    doc["pool_ot_cost"] = std::isnan(report.pool_ot_cost) ? json() : json(report.pool_ot_cost);
    doc["relevance_fraction"] =
        std::isnan(report.relevance_fraction) ? json() : json(report.relevance_fraction);
    doc["ledger"] = {{"llm_calls", report.ledger.llm_calls},
                     {"prompt_tokens", report.ledger.prompt_tokens},
                     {"completion_tokens", report.ledger.completion_tokens},
                     {"ot_evaluations", report.ledger.ot_evaluations},
                     {"warmup_s", report.ledger.warmup_s},
                     {"cluster_s", report.ledger.cluster_s},
                     {"loop_s", report.ledger.loop_s}};
    json arms = json::array();
    for (const auto& arm : report.arms) {
        arms.push_back({{"cluster_id", arm.cluster_id},
                        {"pulls", arm.pulls},
                        {"reward", std::isnan(arm.reward) ? json() : json(arm.reward)},
                        {"exhausted", arm.exhausted}});
    }
    doc["arms"] = std::move(arms);
    std::ofstream out(out_dir + "/report.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + out_dir + "/report.json");
    out << doc.dump(2) << '\n';
}

std::map<std::string, DocLabel> load_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::map<std::string, DocLabel> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        DocLabel label;
        label.topic = rec.at("topic").get<int>();
        label.relevant = rec.at("relevant").get<bool>();
        labels[rec.at("id").get<std::string>()] = label;
    }
    return labels;
}

void gen_synthetic_corpus(const SynthConfig& config) {
    if (config.topics < 2) throw ConfigError("synthetic corpus needs at least 2 topics");
    if (config.relevant_topics < 1 || config.relevant_topics > config.topics) {
        throw ConfigError("relevant_topics out of range");
    }
    if (config.docs_out.empty() || config.ref_out.empty() || config.labels_out.empty()) {
        throw ConfigError("synthetic corpus output paths must be set");
    }
    rng::Engine eng(rng::mix(config.seed, 0x5f4e7));

    std::ofstream docs(config.docs_out, std::ios::binary);
    std::ofstream labels(config.labels_out, std::ios::binary);
    if (!docs || !labels) throw DataError("cannot write synthetic corpus outputs");

    const auto sig_phrase = [&](int topic, int partner, int count) {
        std::string text;
        for (int i = 0; i < count; ++i) {
            const int source = partner >= 0 && rng::uniform01(eng) < 0.5 ? partner : topic;
            if (i) text += ' ';
            text += synth::signature_token(source, static_cast<int>(rng::uniform_index(eng, synth::kSignatureTokens)));
        }
        return text;
    };

    const int tail_count = static_cast<int>(config.tail_fraction * config.docs_per_topic);
    const int decoy_count = static_cast<int>(config.decoy_fraction * config.docs_per_topic);
    // tails of relevant topics span the other relevant topic as sectioned
    // documents (two markers, per-pair pure extraction); a further slice are
    // single-marker comparison docs whose pairs blend both vocabularies;
    // irrelevant tails drift among themselves and never leak reference content
    const auto partner_of = [&](int t) {
        const int relevant = config.relevant_topics;
        if (t < relevant && relevant >= 2) return (t + 1) % relevant;
        if (config.topics - relevant >= 2) {
            return relevant + (t - relevant + 1) % (config.topics - relevant);
        }
        return t;
    };
    for (int t = 0; t < config.topics; ++t) {
        const bool relevant = t < config.relevant_topics;
        for (int d = 0; d < config.docs_per_topic; ++d) {
            const bool tail = d < tail_count;
            const bool decoy = relevant && config.relevant_topics >= 2 && !tail &&
                               d < tail_count + decoy_count;
            const int partner = tail || decoy ? partner_of(t) : -1;
            std::string text = synth::topic_marker(t);
            if (tail && partner != t) {
                text += ' ';
                text += synth::topic_marker(partner);  // sectioned document
            }
            text += ' ';
            text += sig_phrase(t, partner, config.sig_tokens_per_doc);
            if (decoy) {
                for (int j = 0; j < 3; ++j) {
                    text += ' ';
                    text += synth::comparison_token(j);
                }
            }
            const int style = static_cast<int>(rng::uniform_index(
                eng, static_cast<std::size_t>(std::max(config.styles, 1))));
            for (int f = 0; f < config.style_tokens_per_doc; ++f) {
                text += ' ';
                text += synth::style_token(style, static_cast<int>(rng::uniform_index(
                    eng, static_cast<std::size_t>(config.style_vocab))));
            }
            for (int f = 0; f < config.filler_tokens_per_doc; ++f) {
                text += ' ';
                text += synth::filler_token(static_cast<int>(rng::uniform_index(
                    eng, static_cast<std::size_t>(config.filler_vocab))));
            }
            const std::string id = "doc-" + std::to_string(t) + "-" + std::to_string(d);
            json rec;
            rec["id"] = id;
            rec["text"] = text;
            docs << rec.dump() << '\n';
            json label;
            label["id"] = id;
            label["topic"] = t;
            label["relevant"] = relevant && !decoy;
            labels << label.dump() << '\n';
        }
    }

    std::ofstream ref(config.ref_out, std::ios::binary);
    if (!ref) throw DataError("cannot write " + config.ref_out);
    // first relevant topic holds ref_mix of the items, the rest split evenly
    const int majority = config.relevant_topics == 1
                             ? config.ref_items
                             : static_cast<int>(std::lround(config.ref_mix * config.ref_items));
    for (int i = 0; i < config.ref_items; ++i) {
        const int topic = i < majority ? 0 : 1 + (i - majority) % (config.relevant_topics - 1);
        json rec;
        rec["id"] = "ref-" + std::to_string(i);
        rec["question"] = sig_phrase(topic, -1, 5) + "?";
        rec["answer"] = sig_phrase(topic, -1, 5);
        ref << rec.dump() << '\n';
    }
}

namespace {

std::unique_ptr<embed::Embedder> make_provider(const RunConfig& config) {
    if (config.provider == "hash") return std::make_unique<embed::HashEmbedder>(config.embed_dim);
    embed::HttpEmbedderConfig http;
    http.base_url = config.provider_url;
    if (http.base_url.empty()) {
        if (const char* v = std::getenv("EQUAL_API_URL")) http.base_url = v;
    }
    if (const char* v = std::getenv("EQUAL_API_KEY")) http.api_key = v;
    if (http.base_url.empty()) throw ConfigError("http provider requires provider_url or EQUAL_API_URL");
    return std::make_unique<embed::HttpEmbedder>(http);
}

std::string pair_embed_text(const corpus::QAPair& pair) {
    return "Q: " + pair.question + "\nA: " + pair.answer;
}

std::uint64_t budget_of(double gamma, std::size_t corpus_size) {
    return static_cast<std::uint64_t>(std::ceil(gamma * static_cast<double>(corpus_size)));
}

std::vector<std::uint32_t> default_k_grid(std::size_t rows) {
    std::vector<std::uint32_t> grid = {50, 100, 250, 500, 1000, 2000, 5000};
    while (grid.back() > rows) {
        for (auto& g : grid) g = std::max<std::uint32_t>(g / 10, 1);
        std::vector<std::uint32_t> dedup;
        for (auto g : grid) {
            if (dedup.empty() || dedup.back() != g) dedup.push_back(g);
        }
        grid = std::move(dedup);
        if (grid.size() < 3) break;
    }
    while (grid.size() < 3) grid.insert(grid.begin(), std::max<std::uint32_t>(grid.front() / 2, 1));
    std::vector<std::uint32_t> dedup;
    for (auto g : grid) {
        if ((dedup.empty() || dedup.back() != g) && g <= rows) dedup.push_back(g);
    }
    if (dedup.size() < 3) dedup = {1, std::max<std::uint32_t>(2, static_cast<std::uint32_t>(rows / 2)),
                                   static_cast<std::uint32_t>(rows)};
    return dedup;
}

}  // namespace

namespace {

std::size_t provider_dim(embed::Embedder& provider) {
    if (provider.dim() != 0) return provider.dim();
    return embed::embed_texts(provider, {"dimension probe"}, {"probe"}).dim;
}

}  // namespace

WarmupResult warmup(const RunConfig& config, const corpus::DocumentSet& docs,
                    embed::Embedder& provider, CostLedger& ledger) {
    WarmupResult result;
    const std::size_t n_docs = docs.size();
    const std::size_t n_warm =
        static_cast<std::size_t>(std::ceil(config.warmup_ratio * static_cast<double>(n_docs)));
    if (config.mode != "no_cl" && n_warm < 2) {
        throw ConfigError("warm-up needs at least 2 sampled documents; raise warmup_ratio");
    }
    if (n_warm == 0) {
        result.projection = embed::Projection::identity(provider_dim(provider));
        return result;
    }

    rng::Engine eng(rng::mix(config.seed, 0x3a94));
    result.sampled_docs = rng::sample_without_replacement(eng, n_docs, n_warm);
    std::sort(result.sampled_docs.begin(), result.sampled_docs.end());

    std::vector<corpus::Document> batch;
    batch.reserve(result.sampled_docs.size());
    for (std::size_t idx : result.sampled_docs) batch.push_back(docs.documents[idx]);
    extract::ExtractorSpec spec = config.extractor;
    spec.mock_seed = config.seed;
    result.outcomes = extract::extract_batch(spec, batch);

    std::size_t failures = 0;
    for (const auto& outcome : result.outcomes) {
        ledger.llm_calls += outcome.llm_calls;
        ledger.prompt_tokens += outcome.prompt_tokens;
        ledger.completion_tokens += outcome.completion_tokens;
        if (outcome.flagged) ++failures;
    }
    if (failures * 2 > result.outcomes.size()) {
        throw DataError("warm-up extractor failure rate above 50% (" + std::to_string(failures) +
                        "/" + std::to_string(result.outcomes.size()) + ")");
    }

    if (config.mode == "no_cl") {
        result.projection = embed::Projection::identity(provider_dim(provider));
        return result;
    }

    // positives: (document embedding, pair embedding) per extracted pair
    std::map<std::string, const corpus::Document*> by_id;
    for (const auto& doc : batch) by_id[doc.id] = &doc;
    std::vector<std::string> doc_texts, doc_ids, qa_texts, qa_ids;
    for (const auto& outcome : result.outcomes) {
        const auto it = by_id.find(outcome.doc_id);
        if (it == by_id.end()) throw DataError("warm-up outcome for unknown document");
        for (const auto& pair : outcome.pairs) {
            doc_texts.push_back(it->second->text);
            doc_ids.push_back(outcome.doc_id);
            qa_texts.push_back(pair_embed_text(pair));
            qa_ids.push_back(pair.id);
        }
    }
    if (doc_texts.size() < 2) {
        throw DataError("warm-up produced fewer than 2 positives; corpus too sparse");
    }
    embed::WarmupPairSet pair_set;
    pair_set.doc_vecs = embed::embed_texts(provider, doc_texts, doc_ids);
    pair_set.qa_vecs = embed::embed_texts(provider, qa_texts, qa_ids);

    embed::ProjectionConfig train_cfg = config.warmup;
    train_cfg.seed = rng::mix(config.seed, 0x9b05);
    result.projection = embed::train_projection(pair_set, train_cfg);
    return result;
}

namespace {

// Orchestrates one run over prepared inputs; owns all mutable state.
class Engine {
  public:
    explicit Engine(const RunConfig& config) : cfg_(config) {
        cfg_.validate();
        fs::create_directories(cfg_.out_dir);
        provider_ = make_provider(cfg_);
        extractor_ = cfg_.extractor;
        extractor_.mock_seed = cfg_.seed;
    }

    PipelineResult run() {
        prepare();
        if (cfg_.mode == "random") return run_random_impl();
        warmup_stage();
        cluster_stage();
        if (cfg_.mode == "no_mab") return run_no_mab_impl();
        return run_loop_impl();
    }

  private:
    void prepare() {
        docs_ = corpus::load_documents(cfg_.docs_path);
        ref_ = corpus::load_reference(cfg_.ref_path);
        docs_ = corpus::ngram_filter(docs_, ref_, cfg_.ngram_n);
        if (docs_.size() == 0) throw DataError("no documents left after n-gram filtering");
        budget_ = budget_of(cfg_.gamma, docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) doc_index_[docs_.documents[i].id] = i;

        {
            std::vector<std::string> texts, ids;
            for (const auto& item : ref_.items) {
                texts.push_back(pair_embed_text(item));
                ids.push_back(item.id);
            }
            ref_matrix_ = embed::embed_texts(*provider_, texts, ids);
            ref_dist_ = ot::EmpiricalDistribution::uniform(ref_matrix_);
        }

        state_.config_hash = cfg_.hash();
        state_.phase = "init";
        if (cfg_.resume) load_resume_state();
    }

    void load_resume_state() {
        const std::string spath = state_path(cfg_.out_dir);
        if (!fs::exists(spath)) throw ConfigError("resume requested but no state at " + spath);
        RunState saved = load_state(spath);
        if (saved.config_hash != cfg_.hash()) {
            throw ConfigError("resume rejected: config hash mismatch (state " + saved.config_hash +
                              ", config " + cfg_.hash() + ")");
        }
        if (cfg_.mode == "random" || cfg_.mode == "no_mab") {
            throw ConfigError("resume is only supported for modes full, no_cl, no_ot");
        }
        state_ = std::move(saved);
        pool_ = corpus::load_pool(pool_path(cfg_.out_dir));
        resumed_ = true;
    }

    void warmup_stage() {
        if (resumed_ && phase_rank(state_.phase) >= phase_rank("warmup")) {
            projection_ = embed::load_projection(projection_path(cfg_.out_dir));
            return;
        }
        PhaseTimer timer(state_.ledger.warmup_s);
        auto result = warmup(cfg_, docs_, *provider_, state_.ledger);
        projection_ = std::move(result.projection);
        for (std::size_t i = 0; i < result.sampled_docs.size(); ++i) {
            const auto& doc = docs_.documents[result.sampled_docs[i]];
            state_.consumed_docs.insert(doc.id);
            pool_.consume_doc(doc.id);
        }
        // warm-up pairs join the pool under the pre-clustering provenance id
        for (const auto& outcome : result.outcomes) {
            for (const auto& pair : outcome.pairs) pool_.append(pair, -1);
        }
        if (projection_.dim_in == 0) projection_ = embed::Projection::identity(doc_dim());
        embed::save_projection(projection_, projection_path(cfg_.out_dir));
        state_.phase = "warmup";
        checkpoint();
    }

    std::size_t doc_dim() {
        ensure_doc_embeddings();
        return doc_embeddings_.dim;
    }

    void ensure_doc_embeddings() {
        if (doc_embeddings_.rows != 0) return;
        std::vector<std::string> texts, ids;
        texts.reserve(docs_.size());
        for (const auto& doc : docs_.documents) {
            texts.push_back(doc.text);
            ids.push_back(doc.id);
        }
        doc_embeddings_ = embed::embed_texts(*provider_, texts, ids);
    }

    void cluster_stage() {
        ensure_doc_embeddings();
        const bool have_saved = resumed_ && phase_rank(state_.phase) >= phase_rank("cluster");
        PhaseTimer timer(state_.ledger.cluster_s);
        const embed::EmbeddingMatrix space = embed::apply_projection(projection_, doc_embeddings_);
        if (have_saved) {
            clustering_ = cluster::load_clustering(clustering_file_path(cfg_.out_dir));
        } else if (!cfg_.clustering_path.empty()) {
            clustering_ = cluster::load_clustering(cfg_.clustering_path);
            if (clustering_.assignments.size() != docs_.size()) {
                throw DataError("external clustering covers " +
                                std::to_string(clustering_.assignments.size()) + " docs, corpus has " +
                                std::to_string(docs_.size()));
            }
        } else {
            std::uint32_t k = cfg_.k;
            if (k == 0) {
                const auto grid = cfg_.k_grid.empty() ? default_k_grid(space.rows) : cfg_.k_grid;
                const auto report = cluster::elbow_select_k(space, grid, rng::mix(cfg_.seed, 0xe1b0),
                                                            cfg_.kmeans_max_iters);
                k = report.chosen_k;
                json kdoc;
                kdoc["k_grid"] = report.k_grid;
                kdoc["wcss"] = report.wcss_values;
                kdoc["chosen_k"] = report.chosen_k;
                kdoc["degenerate"] = report.degenerate;
                std::ofstream out(cfg_.out_dir + "/kselect.json", std::ios::binary);
                out << kdoc.dump(2) << '\n';
            }
            clustering_ = cluster::kmeans(space, k, rng::mix(cfg_.seed, 0x6b6d), cfg_.kmeans_max_iters);
        }

        // per-cluster unseen docs, ascending doc index; warm-up docs excluded
        cluster_unseen_.assign(clustering_.k, {});
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            if (state_.consumed_docs.count(docs_.documents[i].id)) continue;
            cluster_unseen_[clustering_.assignments[i]].push_back(i);
        }
        if (!resumed_ || state_.bandit.arms.empty()) {
            std::vector<std::uint64_t> remaining(clustering_.k);
            for (std::uint32_t c = 0; c < clustering_.k; ++c) remaining[c] = cluster_unseen_[c].size();
            state_.bandit = bandit::BanditState::init(remaining, cfg_.seed);
        } else {
            for (std::uint32_t c = 0; c < clustering_.k; ++c) {
                if (state_.bandit.arm(c).docs_remaining != cluster_unseen_[c].size()) {
                    throw DataError("resume state inconsistent with clustering for arm " +
                                    std::to_string(c));
                }
            }
        }

        rebuild_cluster_pairs();
        if (!have_saved) {
            cluster::save_clustering(clustering_, clustering_file_path(cfg_.out_dir));
            if (phase_rank(state_.phase) < phase_rank("cluster")) {
                state_.phase = "cluster";
                checkpoint();
            }
        }
    }

    // Cumulative per-cluster pair embeddings, rebuilt from the pool so that
    // resume and fresh runs share one code path.
    void rebuild_cluster_pairs() {
        cluster_pairs_.assign(clustering_.k, embed::EmbeddingMatrix{});
        std::vector<std::vector<std::string>> texts(clustering_.k), ids(clustering_.k);
        for (const auto& entry : pool_.entries()) {
            if (entry.cluster_id < 0) continue;
            const auto c = static_cast<std::uint32_t>(entry.cluster_id);
            if (c >= clustering_.k) throw DataError("pool references unknown cluster");
            texts[c].push_back(pair_embed_text(entry.pair));
            ids[c].push_back(entry.pair.id);
        }
        for (std::uint32_t c = 0; c < clustering_.k; ++c) {
            if (!texts[c].empty()) {
                cluster_pairs_[c] = embed::embed_texts(*provider_, texts[c], ids[c]);
            }
        }
    }

    std::uint64_t budget_left() const {
        if (cfg_.budget_unit == "pairs") {
            const std::uint64_t used = pool_.size();
            const std::uint64_t by_pairs = used >= budget_ ? 0 : budget_ - used;
            const std::uint64_t by_docs =
                state_.docs_sampled >= budget_ ? 0 : budget_ - state_.docs_sampled;
            return std::min(by_pairs, by_docs);
        }
        return state_.docs_sampled >= budget_ ? 0 : budget_ - state_.docs_sampled;
    }

    // Draws up to `want` docs from the cluster's unseen list with a
    // pull-indexed seed, so resumed runs replay the same draws.
    std::vector<std::size_t> draw_batch(std::uint32_t c, std::size_t want) {
        auto& unseen = cluster_unseen_[c];
        want = std::min(want, unseen.size());
        rng::Engine eng(rng::mix(cfg_.seed, rng::mix(0xd0c5, state_.pulls.size() + 1)));
        auto picks = rng::sample_without_replacement(eng, unseen.size(), want);
        std::sort(picks.begin(), picks.end());
        std::vector<std::size_t> batch;
        batch.reserve(want);
        for (std::size_t p : picks) batch.push_back(unseen[p]);
        // remove drawn entries, descending positions keep indices valid
        for (auto it = picks.rbegin(); it != picks.rend(); ++it) {
            unseen.erase(unseen.begin() + static_cast<std::ptrdiff_t>(*it));
        }
        return batch;
    }

    struct PullOutcome {
        std::size_t docs_taken = 0;
        std::size_t pairs_added = 0;
    };

    // Extraction + pool append + cumulative embedding growth for one batch.
    PullOutcome extract_into_pool(std::uint32_t c, const std::vector<std::size_t>& batch) {
        PullOutcome out;
        std::vector<corpus::Document> docs;
        docs.reserve(batch.size());
        for (std::size_t idx : batch) docs.push_back(docs_.documents[idx]);
        const auto outcomes = extract::extract_batch(extractor_, docs);

        std::vector<std::string> new_texts, new_ids;
        for (const auto& outcome : outcomes) {
            state_.ledger.llm_calls += outcome.llm_calls;
            state_.ledger.prompt_tokens += outcome.prompt_tokens;
            state_.ledger.completion_tokens += outcome.completion_tokens;
            pool_.consume_doc(outcome.doc_id);
            state_.consumed_docs.insert(outcome.doc_id);
            ++out.docs_taken;
            for (const auto& pair : outcome.pairs) {
                pool_.append(pair, static_cast<int>(c));
                new_texts.push_back(pair_embed_text(pair));
                new_ids.push_back(pair.id);
                ++out.pairs_added;
            }
        }
        if (!new_texts.empty()) {
            const auto add = embed::embed_texts(*provider_, new_texts, new_ids);
            auto& cum = cluster_pairs_[c];
            if (cum.rows == 0) {
                cum = add;
            } else {
                cum.data.insert(cum.data.end(), add.data.begin(), add.data.end());
                cum.ids.insert(cum.ids.end(), add.ids.begin(), add.ids.end());
                cum.rows += add.rows;
            }
        }
        return out;
    }

    // Scores arm c over its cumulative pairs and books the pull. Returns
    // (reward, ot cost); cost is NaN when no OT evaluation ran.
    std::pair<double, double> score_and_record_pull(std::uint32_t c, std::size_t docs_taken) {
        const auto& cum = cluster_pairs_[c];
        double reward = 0.0;
        double cost = kNaN;
        if (cfg_.mode == "no_ot") {
            if (cum.rows > 0) {
                reward = bandit::avg_sim_reward(ot::EmpiricalDistribution::uniform(cum), ref_dist_);
            }
            bandit::record_pull(state_.bandit, c, reward, docs_taken);
        } else {
            cost = bandit::update_after_pull(state_.bandit, c, ot::EmpiricalDistribution::uniform(cum),
                                             ref_dist_, cfg_.ot, docs_taken);
            reward = *state_.bandit.arm(c).reward;
            if (!std::isnan(cost)) state_.ledger.ot_evaluations += 1;
        }
        return {reward, cost};
    }

    void write_record(std::uint32_t c, double ds, double cost, double reward, std::size_t docs_taken) {
        state_.docs_sampled += docs_taken;
        PullRecord rec;
        rec.pull = state_.pulls.size() + 1;
        rec.cluster_id = static_cast<int>(c);
        rec.ds_score = ds;
        rec.ot_cost = cost;
        rec.reward = reward;
        rec.pool_pairs = pool_.size();
        rec.docs_sampled = state_.docs_sampled;
        state_.pulls.push_back(rec);
    }

    void checkpoint() {
        corpus::persist_pool(pool_, pool_path(cfg_.out_dir));
        save_state(state_, state_path(cfg_.out_dir));
    }

    bool hit_pull_cap() const {
        return cfg_.max_pulls > 0 && state_.pulls.size() >= static_cast<std::size_t>(cfg_.max_pulls);
    }

    PipelineResult run_loop_impl() {
        PhaseTimer timer(state_.ledger.loop_s);
        state_.phase = "pull";
        while (budget_left() > 0 && !hit_pull_cap()) {
            const auto choice = bandit::select_cluster(state_.bandit);
            if (!choice) break;  // every arm exhausted
            const std::uint32_t c = *choice;
            const bool cold = state_.bandit.arm(c).pulls == 0;
            const double ds = cold ? kNaN : bandit::ds_score(state_.bandit, c);

            const std::uint64_t doc_budget =
                cfg_.budget_unit == "pairs" ? budget_ - state_.docs_sampled : budget_left();
            const std::size_t want = std::min<std::uint64_t>(
                static_cast<std::uint64_t>(cfg_.batch_size), doc_budget);
            const auto batch = draw_batch(c, want);
            if (batch.empty()) break;

            extract_into_pool(c, batch);
            const auto [reward, cost] = score_and_record_pull(c, batch.size());
            write_record(c, ds, cost, reward, batch.size());
            checkpoint();
        }
        return finalize();
    }

    PipelineResult run_no_mab_impl() {
        PhaseTimer timer(state_.ledger.loop_s);
        state_.phase = "pull";
        // probe: one pull per cluster, sized to leave budget for the spend phase
        const std::size_t probe_size = std::max<std::size_t>(
            1, std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg_.batch_size),
                                       budget_ / std::max<std::uint32_t>(clustering_.k, 1)));
        for (std::uint32_t c = 0; c < clustering_.k && budget_left() > 0 && !hit_pull_cap(); ++c) {
            const auto batch = draw_batch(c, std::min<std::uint64_t>(probe_size, budget_left()));
            if (batch.empty()) {
                continue;
            }
            extract_into_pool(c, batch);
            const auto [reward, cost] = score_and_record_pull(c, batch.size());
            write_record(c, kNaN, cost, reward, batch.size());
            checkpoint();
        }
        // rank once by probe reward, spend the rest top-down without rescoring
        std::vector<std::uint32_t> order;
        for (std::uint32_t c = 0; c < clustering_.k; ++c) {
            if (state_.bandit.arm(c).reward.has_value()) order.push_back(c);
        }
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return *state_.bandit.arm(a).reward > *state_.bandit.arm(b).reward;
        });
        for (std::uint32_t c : order) {
            while (budget_left() > 0 && !hit_pull_cap() && !state_.bandit.arm(c).exhausted) {
                const std::size_t want = std::min<std::uint64_t>(
                    static_cast<std::uint64_t>(cfg_.batch_size), budget_left());
                const auto batch = draw_batch(c, want);
                if (batch.empty()) break;
                extract_into_pool(c, batch);
                const double frozen = *state_.bandit.arm(c).reward;
                bandit::record_pull(state_.bandit, c, frozen, batch.size());
                write_record(c, kNaN, kNaN, frozen, batch.size());
                checkpoint();
            }
            if (budget_left() == 0 || hit_pull_cap()) break;
        }
        return finalize();
    }

    PipelineResult run_random_impl() {
        PhaseTimer timer(state_.ledger.loop_s);
        state_.phase = "pull";
        rng::Engine eng(rng::mix(cfg_.seed, 0x7a4d));
        auto picks = rng::sample_without_replacement(eng, docs_.size(), budget_);
        std::sort(picks.begin(), picks.end());
        std::size_t off = 0;
        while (off < picks.size() && budget_left() > 0 && !hit_pull_cap()) {
            const std::size_t take = std::min<std::size_t>(
                {static_cast<std::size_t>(cfg_.batch_size), picks.size() - off,
                 static_cast<std::size_t>(budget_left())});
            std::vector<corpus::Document> batch;
            std::size_t docs_taken = 0;
            for (std::size_t i = 0; i < take; ++i) batch.push_back(docs_.documents[picks[off + i]]);
            const auto outcomes = extract::extract_batch(extractor_, batch);
            for (const auto& outcome : outcomes) {
                state_.ledger.llm_calls += outcome.llm_calls;
                state_.ledger.prompt_tokens += outcome.prompt_tokens;
                state_.ledger.completion_tokens += outcome.completion_tokens;
                pool_.consume_doc(outcome.doc_id);
                state_.consumed_docs.insert(outcome.doc_id);
                ++docs_taken;
                for (const auto& pair : outcome.pairs) pool_.append(pair, -1);
            }
            off += take;
            state_.docs_sampled += docs_taken;
            PullRecord rec;
            rec.pull = state_.pulls.size() + 1;
            rec.cluster_id = -1;
            rec.ds_score = kNaN;
            rec.ot_cost = kNaN;
            rec.reward = kNaN;
            rec.pool_pairs = pool_.size();
            rec.docs_sampled = state_.docs_sampled;
            state_.pulls.push_back(rec);
            checkpoint();
        }
        return finalize();
    }

    PipelineResult finalize() {
        if (!hit_pull_cap()) state_.phase = "done";
        checkpoint();

        Report report;
        report.config_echo = cfg_.echo_lines();
        report.pulls = state_.pulls;
        report.total_pulls = state_.pulls.size();
        report.docs_sampled = state_.docs_sampled;
        report.pool_pairs = pool_.size();
        report.ledger = state_.ledger;
        for (const auto& arm : state_.bandit.arms) {
            report.arms.push_back({arm.cluster_id, arm.pulls,
                                   arm.reward.has_value() ? *arm.reward : kNaN, arm.exhausted});
        }

        report.pool_ot_cost = kNaN;
        if (pool_.size() > 0) {
            std::vector<std::string> texts, ids;
            for (const auto& entry : pool_.entries()) {
                texts.push_back(pair_embed_text(entry.pair));
                ids.push_back(entry.pair.id);
            }
            const auto pool_matrix = embed::embed_texts(*provider_, texts, ids);
            const auto mu = ot::subsample(ot::EmpiricalDistribution::uniform(pool_matrix),
                                          cfg_.ot.point_cap, rng::mix(cfg_.seed, 0x4df0));
            const auto nu = ot::subsample(ref_dist_, cfg_.ot.point_cap, rng::mix(cfg_.seed, 0x4df1));
            report.pool_ot_cost = ot::ot_cost(mu, nu, cfg_.ot).cost;
            state_.ledger.ot_evaluations += 1;
            report.ledger = state_.ledger;
        }

        report.relevance_fraction = kNaN;
        if (!cfg_.labels_path.empty() && pool_.size() > 0) {
            const auto labels = load_labels(cfg_.labels_path);
            std::size_t relevant = 0;
            for (const auto& entry : pool_.entries()) {
                const auto it = labels.find(entry.pair.doc_id);
                if (it != labels.end() && it->second.relevant) ++relevant;
            }
            report.relevance_fraction =
                static_cast<double>(relevant) / static_cast<double>(pool_.size());
        }

        write_report_files(report, cfg_.out_dir);
        save_state(state_, state_path(cfg_.out_dir));
        return PipelineResult{pool_, std::move(report)};
    }

    RunConfig cfg_;
    std::unique_ptr<embed::Embedder> provider_;
    extract::ExtractorSpec extractor_;
    corpus::DocumentSet docs_;
    corpus::ReferenceSet ref_;
    embed::EmbeddingMatrix ref_matrix_;
    ot::EmpiricalDistribution ref_dist_;
    embed::EmbeddingMatrix doc_embeddings_;
    embed::Projection projection_;
    cluster::Clustering clustering_;
    corpus::ExtractionPool pool_;
    RunState state_;
    std::vector<std::vector<std::size_t>> cluster_unseen_;
    std::vector<embed::EmbeddingMatrix> cluster_pairs_;
    std::unordered_map<std::string, std::size_t> doc_index_;
    std::uint64_t budget_ = 0;
    bool resumed_ = false;
};

}  // namespace

PipelineResult run_equal(const RunConfig& config) {
    if (config.mode == "no_mab" || config.mode == "random") {
        throw ConfigError("run_equal handles modes full, no_cl, no_ot");
    }
    Engine engine(config);
    return engine.run();
}

PipelineResult run_no_mab(const RunConfig& config) {
    RunConfig cfg = config;
    cfg.mode = "no_mab";
    Engine engine(cfg);
    return engine.run();
}

PipelineResult run_random(const RunConfig& config) {
    RunConfig cfg = config;
    cfg.mode = "random";
    Engine engine(cfg);
    return engine.run();
}

PipelineResult run(const RunConfig& config) {
    if (config.mode == "no_mab") return run_no_mab(config);
    if (config.mode == "random") return run_random(config);
    return run_equal(config);
}

}  // namespace equal::pipeline
