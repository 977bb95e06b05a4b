#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "equal/embed.hpp"

namespace equal::synth {

// Vocabulary conventions shared by the synthetic corpus generator and the
// mock extractor. A document's topical content is its signature tokens;
// filler tokens are comment noise shared across topics.
inline constexpr int kSignatureTokens = 4;

inline std::string topic_marker(int topic) { return "topic=" + std::to_string(topic); }

std::optional<int> parse_topic_marker(std::string_view text);

// All topic=<t> markers in order. Multi-marker documents are sectioned: the
// mock extracts each pair from a single topic's tokens. Single-marker
// documents with mixed vocabulary yield blended pairs.
std::vector<int> parse_topic_markers(std::string_view text);

inline std::string signature_token(int topic, int j) {
    return "sig" + std::to_string(topic) + "w" + std::to_string(j);
}

inline std::string filler_token(int j) { return "fl" + std::to_string(j); }

// Boilerplate vocabulary: each document leans heavily on one style, which
// dominates raw document embeddings but never appears in extracted pairs.
inline std::string style_token(int style, int j) {
    return "sty" + std::to_string(style) + "x" + std::to_string(j);
}

// Document-side accent of comparison documents; keeps them clusterable apart
// from sectioned multi-topic documents.
inline std::string comparison_token(int j) { return "cmpw" + std::to_string(j); }

inline bool is_signature_token(std::string_view tok) { return tok.rfind("sig", 0) == 0; }
inline bool is_filler_token(std::string_view tok) { return tok.rfind("fl", 0) == 0; }

// Topic index of a signature token, nullopt for anything else.
std::optional<int> signature_topic_of(std::string_view tok);

inline std::string noise_token(std::uint64_t v) { return "nz" + std::to_string(v % 4096); }

// Canonical unit direction of each topic under a hash embedder of the given
// dimension: the embedding of the topic's full signature phrase.
embed::EmbeddingMatrix topic_directions(int topics, std::size_t dim);

}  // namespace equal::synth
