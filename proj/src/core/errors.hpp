#pragma once

#include <stdexcept>
#include <string>

namespace adrrec {

// Error taxonomy mirrored by the C API / CLI exit codes:
// config -> 2, data/protocol -> 3, numerical -> 4, everything else -> 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& m) : std::runtime_error(m) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};

// Broken internal contract (caller bug, not user input).
struct InvariantError : std::logic_error {
    explicit InvariantError(const std::string& m) : std::logic_error(m) {}
};

}  // namespace adrrec
