#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "equal/cluster.hpp"
#include "equal/common.hpp"
#include "equal/corpus.hpp"
#include "equal/error.hpp"
#include "equal/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using equal::pipeline::RunConfig;

// Common flags shared by warmup/cluster/run/ablate. CLI values override the
// config file.
struct CommonFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value configuration file");
        const auto track = [this](const std::string& key) {
            return [this, key](const std::string& value) { overrides.emplace_back(key, value); };
        };
        cmd->add_option_function<std::string>("--docs", track("docs"), "documents file (JSONL)");
        cmd->add_option_function<std::string>("--ref", track("reference"), "reference QA file (JSONL)");
        cmd->add_option_function<std::string>("--out-dir", track("out_dir"), "output directory");
        cmd->add_option_function<std::string>("--labels", track("labels"), "ground-truth labels sidecar");
        cmd->add_option_function<std::string>("--clustering", track("clustering"),
                                              "externally supplied clustering file");
        cmd->add_option_function<std::string>("--seed", track("seed"), "run seed");
        cmd->add_option_function<std::string>("--gamma", track("gamma"), "budget ratio in (0,1]");
        cmd->add_option_function<std::string>("--batch-size", track("batch_size"), "documents per pull");
        cmd->add_option_function<std::string>("--k", track("k"), "cluster count (0 = elbow)");
        cmd->add_option_function<std::string>("--k-grid", track("k_grid"), "comma-separated elbow grid");
        cmd->add_option_function<std::string>("--warmup-ratio", track("warmup_ratio"),
                                              "warm-up sampling ratio");
        cmd->add_option_function<std::string>("--ngram-n", track("ngram_n"), "contamination n-gram size");
        cmd->add_option_function<std::string>("--embed-dim", track("embed_dim"),
                                              "hash embedder dimension");
        cmd->add_option_function<std::string>("--provider", track("provider"),
                                              "embedding provider: hash | http");
        cmd->add_option_function<std::string>("--provider-url", track("provider_url"),
                                              "embedding endpoint base URL");
        cmd->add_option_function<std::string>("--extractor", track("extractor"),
                                              "extractor kind: mock | http");
        cmd->add_option_function<std::string>("--endpoint", track("extractor_endpoint"),
                                              "chat endpoint base URL");
        cmd->add_option_function<std::string>("--model", track("extractor_model"), "model name");
        cmd->add_option_function<std::string>("--template", track("extractor_template"),
                                              "extraction template: math | code | path");
        cmd->add_option_function<std::string>("--budget-unit", track("budget_unit"),
                                              "budget unit: docs | pairs");
        cmd->add_option_function<std::string>("--ot-epsilon", track("ot_epsilon"),
                                              "entropic regularization strength");
        cmd->add_option_function<std::string>("--ot-point-cap", track("ot_point_cap"),
                                              "subsample cap per OT evaluation");
    }

    RunConfig resolve() const {
        RunConfig config;
        if (!config_path.empty()) config = equal::pipeline::load_config_file(config_path);
        for (const auto& [key, value] : overrides) {
            equal::pipeline::apply_config_line(config, key, value);
        }
        config.extractor.apply_env();
        return config;
    }
};

int dispatch(int argc, char** argv) {
    CLI::App app{"budget-aware QA extraction pipeline"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load, validate and contamination-filter documents");
    std::string in_docs, in_ref, in_out;
    std::size_t in_n = 10;
    ingest->add_option("--docs", in_docs, "documents file")->required();
    ingest->add_option("--ref", in_ref, "reference QA file")->required();
    ingest->add_option("--out", in_out, "filtered documents output")->required();
    ingest->add_option("--n", in_n, "n-gram size (default 10)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with ground truth");
    equal::pipeline::SynthConfig synth_cfg;
    std::string synth_dir = ".";
    synth->add_option("--out-dir", synth_dir, "output directory")->required();
    synth->add_option("--topics", synth_cfg.topics, "topic count (default 10)");
    synth->add_option("--docs-per-topic", synth_cfg.docs_per_topic, "documents per topic (default 100)");
    synth->add_option("--dim", synth_cfg.dim, "embedding dimension hint (default 384)");
    synth->add_option("--relevant", synth_cfg.relevant_topics, "relevant topic count (default 2)");
    synth->add_option("--tail-fraction", synth_cfg.tail_fraction,
                      "fraction of docs mixing a partner topic (default 0.15)");
    synth->add_option("--ref-items", synth_cfg.ref_items, "reference set size (default 100)");
    synth->add_option("--seed", synth_cfg.seed, "generator seed");

    // warmup / cluster / run / ablate
    auto* warm = app.add_subcommand("warmup", "sample, extract and train the alignment projection");
    CommonFlags warm_flags;
    warm_flags.attach(warm);

    auto* clus = app.add_subcommand("cluster", "embed, project and cluster the corpus");
    CommonFlags clus_flags;
    clus_flags.attach(clus);

    auto* runc = app.add_subcommand("run", "run the full selection pipeline");
    CommonFlags run_flags;
    bool run_resume = false;
    runc->add_flag("--resume", run_resume, "resume from the saved run state");
    run_flags.attach(runc);

    auto* ablate = app.add_subcommand("ablate", "run an ablation or baseline mode");
    CommonFlags ablate_flags;
    std::string ablate_mode;
    ablate->add_option("--mode", ablate_mode, "no_cl | no_mab | no_ot | random")->required();
    ablate_flags.attach(ablate);

    // report
    auto* rep = app.add_subcommand("report", "rebuild report files from a saved run");
    std::string rep_dir;
    rep->add_option("--out-dir", rep_dir, "run output directory")->required();

    app.parse(argc, argv);

    if (*ingest) {
        const auto docs = equal::corpus::load_documents(in_docs);
        const auto ref = equal::corpus::load_reference(in_ref);
        const auto kept = equal::corpus::ngram_filter(docs, ref, in_n);
        equal::corpus::save_documents(kept, in_out);
        std::printf("kept %zu of %zu documents (n = %zu)\n", kept.size(), docs.size(), in_n);
        return 0;
    }
    if (*synth) {
        fs::create_directories(synth_dir);
        synth_cfg.docs_out = synth_dir + "/docs.jsonl";
        synth_cfg.ref_out = synth_dir + "/reference.jsonl";
        synth_cfg.labels_out = synth_dir + "/labels.jsonl";
        equal::pipeline::gen_synthetic_corpus(synth_cfg);
        std::printf("wrote %s, %s, %s\n", synth_cfg.docs_out.c_str(), synth_cfg.ref_out.c_str(),
                    synth_cfg.labels_out.c_str());
        return 0;
    }
    if (*warm) {
        RunConfig config = warm_flags.resolve();
        config.validate();
        fs::create_directories(config.out_dir);
        auto docs = equal::corpus::load_documents(config.docs_path);
        const auto ref = equal::corpus::load_reference(config.ref_path);
        docs = equal::corpus::ngram_filter(docs, ref, config.ngram_n);
        auto provider = config.provider == "hash"
                            ? std::unique_ptr<equal::embed::Embedder>(
                                  new equal::embed::HashEmbedder(config.embed_dim))
                            : nullptr;
        if (!provider) throw equal::ConfigError("warmup subcommand supports the hash provider");
        equal::pipeline::CostLedger ledger;
        auto result = equal::pipeline::warmup(config, docs, *provider, ledger);
        equal::embed::save_projection(result.projection,
                                      equal::pipeline::projection_path(config.out_dir));
        equal::corpus::ExtractionPool pool;
        for (const auto& outcome : result.outcomes) {
            pool.consume_doc(outcome.doc_id);
            for (const auto& pair : outcome.pairs) pool.append(pair, -1);
        }
        equal::corpus::persist_pool(pool, equal::pipeline::pool_path(config.out_dir));
        std::printf("warm-up: %zu docs sampled, %zu pairs, projection %zux%zu\n",
                    result.sampled_docs.size(), pool.size(), result.projection.dim_in,
                    result.projection.dim_out);
        return 0;
    }
    if (*clus) {
        RunConfig config = clus_flags.resolve();
        config.validate();
        fs::create_directories(config.out_dir);
        auto docs = equal::corpus::load_documents(config.docs_path);
        const auto ref = equal::corpus::load_reference(config.ref_path);
        docs = equal::corpus::ngram_filter(docs, ref, config.ngram_n);
        equal::embed::HashEmbedder provider(config.embed_dim);
        std::vector<std::string> texts, ids;
        for (const auto& doc : docs.documents) {
            texts.push_back(doc.text);
            ids.push_back(doc.id);
        }
        auto matrix = equal::embed::embed_texts(provider, texts, ids);
        equal::embed::Projection projection = equal::embed::Projection::identity(matrix.dim);
        const std::string proj_file = equal::pipeline::projection_path(config.out_dir);
        if (fs::exists(proj_file)) projection = equal::embed::load_projection(proj_file);
        const auto space = equal::embed::apply_projection(projection, matrix);
        std::uint32_t k = config.k;
        if (k == 0) {
            const auto grid = config.k_grid.empty()
                                  ? std::vector<std::uint32_t>{2, 4, 8, 16, 32, 64}
                                  : config.k_grid;
            const auto report = equal::cluster::elbow_select_k(
                space, grid, equal::rng::mix(config.seed, 0xe1b0), config.kmeans_max_iters);
            k = report.chosen_k;
            std::printf("elbow chose k = %u%s\n", k, report.degenerate ? " (degenerate)" : "");
        }
        const auto clustering = equal::cluster::kmeans(space, k, equal::rng::mix(config.seed, 0x6b6d),
                                                       config.kmeans_max_iters);
        equal::cluster::save_clustering(clustering,
                                        equal::pipeline::clustering_file_path(config.out_dir));
        std::printf("clustered %zu docs into %u clusters, WCSS %.6f\n", space.rows, clustering.k,
                    equal::cluster::wcss(space, clustering));
        return 0;
    }
    if (*runc) {
        RunConfig config = run_flags.resolve();
        config.resume = run_resume;
        const auto result = equal::pipeline::run_equal(config);
        std::printf("done: %zu pairs from %llu docs over %llu pulls\n", result.pool.size(),
                    static_cast<unsigned long long>(result.report.docs_sampled),
                    static_cast<unsigned long long>(result.report.total_pulls));
        return 0;
    }
    if (*ablate) {
        RunConfig config = ablate_flags.resolve();
        config.mode = ablate_mode;
        const auto result = equal::pipeline::run(config);
        std::printf("done (%s): %zu pairs from %llu docs over %llu pulls\n", ablate_mode.c_str(),
                    result.pool.size(), static_cast<unsigned long long>(result.report.docs_sampled),
                    static_cast<unsigned long long>(result.report.total_pulls));
        return 0;
    }
    if (*rep) {
        const auto state = equal::pipeline::load_state(equal::pipeline::state_path(rep_dir));
        const auto pool = equal::corpus::load_pool(equal::pipeline::pool_path(rep_dir));
        equal::pipeline::Report report;
        report.pulls = state.pulls;
        report.total_pulls = state.pulls.size();
        report.docs_sampled = state.docs_sampled;
        report.pool_pairs = pool.size();
        report.ledger = state.ledger;
        report.pool_ot_cost = std::numeric_limits<double>::quiet_NaN();
        report.relevance_fraction = std::numeric_limits<double>::quiet_NaN();
        for (const auto& arm : state.bandit.arms) {
            report.arms.push_back({arm.cluster_id, arm.pulls,
                                   arm.reward.has_value() ? *arm.reward
                                                          : std::numeric_limits<double>::quiet_NaN(),
                                   arm.exhausted});
        }
        equal::pipeline::write_report_files(report, rep_dir);
        std::printf("report rebuilt: %llu pulls, %zu pairs\n",
                    static_cast<unsigned long long>(report.total_pulls), pool.size());
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const equal::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const equal::TransportError& e) {
        std::fprintf(stderr, "extractor outage: %s (state saved; rerun with --resume)\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
