#ifndef KAN_ERRORS_HPP
#define KAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kan {

// Data-level failures: malformed files, bad generator configs, degenerate
// feature columns. CLI maps these to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateFeatureError : DataError {
    explicit DegenerateFeatureError(const std::string& msg) : DataError(msg) {}
};

struct ClassStarvationError : DataError {
    explicit ClassStarvationError(const std::string& msg) : DataError(msg) {}
};

struct WindowOutOfRangeError : DataError {
    explicit WindowOutOfRangeError(const std::string& msg) : DataError(msg) {}
};

// Model-level failures: broken model files, shape mismatches, diverged
// training, non-finite symbolic evaluation. CLI maps these to exit code 3.
struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatchError : ModelError {
    explicit DimensionMismatchError(const std::string& msg) : ModelError(msg) {}
};

struct CorruptStreamError : ModelError {
    explicit CorruptStreamError(const std::string& msg) : ModelError(msg) {}
};

struct VersionMismatchError : ModelError {
    explicit VersionMismatchError(const std::string& msg) : ModelError(msg) {}
};

struct DivergedLossError : ModelError {
    explicit DivergedLossError(const std::string& msg) : ModelError(msg) {}
};

struct SingularSystemError : ModelError {
    explicit SingularSystemError(const std::string& msg) : ModelError(msg) {}
};

struct NonFiniteEvalError : ModelError {
    explicit NonFiniteEvalError(const std::string& msg) : ModelError(msg) {}
};

} // namespace kan

#endif
