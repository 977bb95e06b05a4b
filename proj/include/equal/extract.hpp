#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "equal/corpus.hpp"

namespace equal::extract {

// Sectioned template file: "=== system ===", optional repeated
// "=== example input ===" / "=== example output ===" blocks, "=== user ===".
// The user section holds exactly one {{DOCUMENT}} placeholder.
struct PromptTemplate {
    std::string id;
    std::string system_text;
    std::vector<std::pair<std::string, std::string>> examples;  // (input, output)
    std::string user_text;

    static PromptTemplate parse(const std::string& content, const std::string& id);
    static PromptTemplate load_file(const std::string& path);
    // Shipped templates: "math", "code", "refine".
    static PromptTemplate builtin(const std::string& id);

    std::string render_system() const;
    std::string render_user(const std::string& document) const;
};

enum class ExtractorKind { mock, http };

struct ExtractorSpec {
    ExtractorKind kind = ExtractorKind::mock;
    std::string endpoint;  // base URL, e.g. http://host:port/v1
    std::string model;
    std::string api_key;
    std::string template_id = "math";          // builtin id or template file path
    std::string refine_template_id = "refine";
    int max_pairs = 8;
    int retries = 3;  // additional attempts after the first
    int backoff_ms = 1000;
    int timeout_s = 120;
    std::size_t doc_char_cap = 24000;
    int fanout = 8;
    bool refine = true;
    std::uint64_t mock_seed = 0;

    // EQUAL_API_URL / EQUAL_API_KEY / EQUAL_MODEL take precedence.
    void apply_env();
    void validate() const;
};

struct DroppedPair {
    std::string pair_id;
    std::string reason;
};

struct ExtractionOutcome {
    std::string doc_id;
    std::vector<corpus::QAPair> pairs;
    std::vector<DroppedPair> dropped;
    bool flagged = false;
    std::string flag_reason;
    std::uint64_t llm_calls = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    double latency_s = 0.0;
};

// Q:/A: sectioned completion -> (question, answer) list. Tolerates markdown
// fences and list/bold prefixes. A bare "void" yields an empty list. Dangling
// questions or stray answers raise ParseError carrying the raw completion.
std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& completion);

// One document through the extraction prompt, then each parsed pair through
// refinement. Mock specs dispatch to mock_extract.
ExtractionOutcome extract_qa(const ExtractorSpec& spec, const corpus::Document& doc);

// Second LLM round-trip on one pair. Returns nullopt and a reason when the
// refined pair comes back void, empty, or unparseable.
std::optional<corpus::QAPair> refine_qa(const ExtractorSpec& spec, const corpus::QAPair& pair,
                                        std::string* drop_reason,
                                        ExtractionOutcome* accounting = nullptr);

// Deterministic test extractor for synthetic corpora. Emits 1-3 pairs built
// from the document's signature tokens; documents without a topic=<t> marker
// yield zero pairs and a flag.
ExtractionOutcome mock_extract(const corpus::Document& doc, std::uint64_t seed);

// Extracts a batch with up to spec.fanout requests in flight; outcomes are
// returned sorted by doc id regardless of completion order.
std::vector<ExtractionOutcome> extract_batch(const ExtractorSpec& spec,
                                             std::span<const corpus::Document> docs);

}  // namespace equal::extract
