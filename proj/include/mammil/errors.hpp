#pragma once

#include <stdexcept>
#include <string>

namespace mammil {

// Error categories map to CLI exit codes: config -> 2, data -> 3,
// verification -> 4. Everything else is a plain runtime_error.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VerificationError : std::runtime_error {
    explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mammil
