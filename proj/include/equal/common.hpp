#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace equal {

// 64-bit FNV-1a. Used for file checksums, n-gram hashing, and seed derivation.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= kFnvPrime;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

namespace rng {

using Engine = std::mt19937_64;

// splitmix64 finalizer; stirs counters into independent stream seeds.
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Uniform in [0,1) with 53 random bits. std::uniform_real_distribution is
// implementation-defined, so distributions are rolled by hand throughout.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform in [0, n). Rejection sampling, no modulo bias.
inline std::size_t uniform_index(Engine& eng, std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = eng();
    while (v >= limit) v = eng();
    return static_cast<std::size_t>(v % n);
}

// k distinct indices from [0, n), partial Fisher-Yates, order as drawn.
std::vector<std::size_t> sample_without_replacement(Engine& eng, std::size_t n, std::size_t k);

}  // namespace rng

// Lowercased tokens split on Unicode whitespace, ASCII punctuation stripped
// from token edges. Tokens that strip to nothing are dropped.
std::vector<std::string> tokenize(std::string_view text);

// "http://host:port/v1" -> {"http://host:port", "/v1"}.
struct UrlParts {
    std::string base;
    std::string path_prefix;
};
UrlParts split_url(const std::string& url);

// Order-sensitive hash of tokens[first, first+n).
std::uint64_t ngram_hash(const std::vector<std::string>& tokens, std::size_t first, std::size_t n);

}  // namespace equal
