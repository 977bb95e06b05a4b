#include "equal/common.hpp"

#include <array>
#include <cctype>
#include <stdexcept>

namespace equal {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

namespace rng {

std::vector<std::size_t> sample_without_replacement(Engine& eng, std::size_t n, std::size_t k) {
    if (k > n) k = n;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(eng, n - i);
        std::swap(idx[i], idx[j]);
        out.push_back(idx[i]);
    }
    return out;
}

}  // namespace rng

namespace {

bool is_unicode_ws(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d:
        case 0x20: case 0x85: case 0xa0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202f: case 0x205f: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200a;
    }
}

// Decodes one UTF-8 codepoint at text[i]; advances i. Invalid bytes are
// returned as-is so dirty corpora never throw.
char32_t next_codepoint(std::string_view text, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    const unsigned char b0 = byte(i);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xf0) len = 4, cp = b0 & 0x07u;
    else if (b0 >= 0xe0) len = 3, cp = b0 & 0x0fu;
    else if (b0 >= 0xc0) len = 2, cp = b0 & 0x1fu;
    if (len > 1) {
        if (i + len > text.size()) { ++i; return b0; }
        for (std::size_t k = 1; k < len; ++k) {
            if ((byte(i + k) & 0xc0u) != 0x80u) { ++i; return b0; }
            cp = (cp << 6) | (byte(i + k) & 0x3fu);
        }
    }
    i += len;
    return cp;
}

bool is_ascii_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    const auto flush = [&]() {
        std::size_t b = 0, e = cur.size();
        while (b < e && is_ascii_punct(cur[b])) ++b;
        while (e > b && is_ascii_punct(cur[e - 1])) --e;
        if (e > b) tokens.emplace_back(cur.substr(b, e - b));
        cur.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        const char32_t cp = next_codepoint(text, i);
        if (is_unicode_ws(cp)) {
            flush();
        } else if (cp < 0x80) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(text[start])));
        } else {
            cur.append(text.substr(start, i - start));
        }
    }
    flush();
    return tokens;
}

UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("endpoint must include a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    UrlParts parts;
    if (path_start == std::string::npos) {
        parts.base = url;
    } else {
        parts.base = url.substr(0, path_start);
        parts.path_prefix = url.substr(path_start);
        while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') {
            parts.path_prefix.pop_back();
        }
    }
    return parts;
}

std::uint64_t ngram_hash(const std::vector<std::string>& tokens, std::size_t first, std::size_t n) {
    std::uint64_t h = kFnvOffset;
    for (std::size_t i = 0; i < n; ++i) {
        h = fnv1a(tokens[first + i], h);
        h ^= 0x1f;
        h *= kFnvPrime;
    }
    return h;
}

}  // namespace equal
