#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "equal/bandit.hpp"
#include "equal/cluster.hpp"
#include "equal/corpus.hpp"
#include "equal/embed.hpp"
#include "equal/extract.hpp"
#include "equal/ot.hpp"

namespace equal::pipeline {

struct RunConfig {
    std::string docs_path;
    std::string ref_path;
    std::string out_dir;
    std::string labels_path;      // synthetic ground truth, enables relevance metrics
    std::string clustering_path;  // externally supplied clustering, skips k-means

    double gamma = 0.05;     // budget as a fraction of the candidate pool
    int batch_size = 32;     // documents per pull
    double warmup_ratio = 0.05;
    std::uint32_t k = 0;     // 0 = choose by elbow over k_grid
    std::vector<std::uint32_t> k_grid;  // empty = default grid scaled to the corpus
    int kmeans_max_iters = 100;
    std::size_t ngram_n = 10;
    std::size_t embed_dim = 384;      // hash provider dimension
    std::string provider = "hash";    // hash | http
    std::string provider_url;
    std::string mode = "full";        // full | no_cl | no_mab | no_ot | random
    std::string budget_unit = "docs";  // docs | pairs
    std::uint64_t seed = 0;
    bool resume = false;
    int max_pulls = 0;  // 0 = unlimited; positive values stop the loop early

    embed::ProjectionConfig warmup;
    ot::OtConfig ot;
    extract::ExtractorSpec extractor;

    void validate() const;
    // Canonical "key = value" lines for the report echo and the resume hash
    // (resume/max_pulls/out_dir excluded from the hash).
    std::vector<std::string> echo_lines() const;
    std::string hash() const;
};

// Flat key = value file, '#' comments. Unknown keys are rejected.
RunConfig load_config_file(const std::string& path);
void apply_config_line(RunConfig& config, const std::string& key, const std::string& value);

struct CostLedger {
    std::uint64_t llm_calls = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t ot_evaluations = 0;
    double warmup_s = 0.0;
    double cluster_s = 0.0;
    double loop_s = 0.0;
};

struct PullRecord {
    std::uint64_t pull = 0;  // 1-based
    int cluster_id = -1;
    double ds_score = 0.0;  // NaN for cold-start / unscored pulls
    double ot_cost = 0.0;   // NaN when no OT evaluation happened
    double reward = 0.0;
    std::uint64_t pool_pairs = 0;
    std::uint64_t docs_sampled = 0;
};

struct RunState {
    std::string config_hash;
    std::string phase = "init";  // init -> warmup -> cluster -> pull -> done
    std::uint64_t docs_sampled = 0;
    bandit::BanditState bandit;
    std::set<std::string> consumed_docs;
    std::vector<PullRecord> pulls;
    CostLedger ledger;
};

void save_state(const RunState& state, const std::string& path);
RunState load_state(const std::string& path);

struct Report {
    std::vector<std::string> config_echo;
    std::vector<PullRecord> pulls;
    std::uint64_t total_pulls = 0;
    std::uint64_t docs_sampled = 0;
    std::uint64_t pool_pairs = 0;
    double pool_ot_cost = 0.0;          // final pool vs reference, NaN if pool empty
    double relevance_fraction = 0.0;    // NaN without ground-truth labels
    CostLedger ledger;
    struct ArmSummary {
        std::uint32_t cluster_id;
        std::uint64_t pulls;
        double reward;  // NaN if never pulled
        bool exhausted;
    };
    std::vector<ArmSummary> arms;
};

// report.json plus pulls.csv with header
// pull,cluster_id,ds_score,ot_cost,reward,pool_pairs,docs_sampled
void write_report_files(const Report& report, const std::string& out_dir);

struct PipelineResult {
    corpus::ExtractionPool pool;
    Report report;
};

// Warm-up sampling + extraction + contrastive projection training over one
// already-loaded corpus. Exposed for the `warmup` subcommand and tests.
struct WarmupResult {
    embed::Projection projection;
    std::vector<extract::ExtractionOutcome> outcomes;  // sorted by doc id
    std::vector<std::size_t> sampled_docs;             // indices into docs
};
WarmupResult warmup(const RunConfig& config, const corpus::DocumentSet& docs,
                    embed::Embedder& provider, CostLedger& ledger);

// Full bandit pipeline (modes full / no_cl / no_ot), resumable.
PipelineResult run_equal(const RunConfig& config);
// One probe pull per cluster, a single ranking, then budget spent top-down.
PipelineResult run_no_mab(const RunConfig& config);
// Uniform document selection baseline; no warm-up, no clustering.
PipelineResult run_random(const RunConfig& config);
// Dispatch on config.mode.
PipelineResult run(const RunConfig& config);

struct SynthConfig {
    int topics = 10;
    int docs_per_topic = 100;
    std::size_t dim = 384;
    int relevant_topics = 2;
    double tail_fraction = 0.3;   // sectioned docs spanning a partner topic
    double decoy_fraction = 0.2;  // comparison docs blending the relevant topics
    int ref_items = 100;
    double ref_mix = 0.5;  // reference share of the first relevant topic
    int sig_tokens_per_doc = 5;
    int styles = 2;               // boilerplate families dominating raw doc vectors
    int style_tokens_per_doc = 8;
    int style_vocab = 4;          // tokens per style family
    int filler_tokens_per_doc = 6;
    int filler_vocab = 40;
    std::uint64_t seed = 0;
    std::string docs_out;
    std::string ref_out;
    std::string labels_out;
};

// Documents carry topic=<t> markers, signature tokens, and shared filler;
// the reference set covers the designated relevant topics. Ground truth goes
// to a labels sidecar: {"id", "topic", "relevant"} per line.
void gen_synthetic_corpus(const SynthConfig& config);

struct DocLabel {
    int topic = -1;
    bool relevant = false;
};
std::map<std::string, DocLabel> load_labels(const std::string& path);

// Helpers shared by subcommands and tests.
std::string pool_path(const std::string& out_dir);
std::string state_path(const std::string& out_dir);
std::string projection_path(const std::string& out_dir);
std::string clustering_file_path(const std::string& out_dir);

}  // namespace equal::pipeline
