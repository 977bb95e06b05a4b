#pragma once

#include <stdexcept>
#include <string>

namespace equal {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration or CLI usage. Maps to exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed, inconsistent, or corrupted input data.
struct DataError : Error {
    using Error::Error;
};

// An LLM completion that could not be parsed; keeps the raw text.
struct ParseError : Error {
    ParseError(const std::string& what, std::string raw_text)
        : Error(what), raw(std::move(raw_text)) {}
    std::string raw;
};

// Remote endpoint unreachable after retries. Maps to exit code 3.
struct TransportError : Error {
    using Error::Error;
};

// Non-finite values, degenerate vectors, infeasible weights.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace equal
