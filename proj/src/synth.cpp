#include "equal/synth.hpp"

#include <charconv>

namespace equal::synth {

std::optional<int> signature_topic_of(std::string_view tok) {
    if (!is_signature_token(tok)) return std::nullopt;
    const auto digits = tok.substr(3);
    const auto w = digits.find('w');
    if (w == std::string_view::npos || w == 0) return std::nullopt;
    int value = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + w, value);
    if (ec != std::errc() || ptr != digits.data() + w) return std::nullopt;
    return value;
}

std::optional<int> parse_topic_marker(std::string_view text) {
    const auto all = parse_topic_markers(text);
    if (all.empty()) return std::nullopt;
    return all.front();
}

std::vector<int> parse_topic_markers(std::string_view text) {
    std::vector<int> out;
    const std::string_view key = "topic=";
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string_view::npos) {
        const auto digits = text.substr(pos + key.size());
        int value = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec == std::errc() && ptr != digits.data()) out.push_back(value);
        pos += key.size();
    }
    return out;
}

embed::EmbeddingMatrix topic_directions(int topics, std::size_t dim) {
    embed::HashEmbedder embedder(dim);
    std::vector<std::string> phrases, ids;
    for (int t = 0; t < topics; ++t) {
        std::string phrase;
        for (int j = 0; j < kSignatureTokens; ++j) {
            if (j) phrase += ' ';
            phrase += signature_token(t, j);
        }
        phrases.push_back(phrase);
        ids.push_back("topic-" + std::to_string(t));
    }
    return embedder.embed(phrases, ids);
}

}  // namespace equal::synth
