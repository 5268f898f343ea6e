#pragma once

#include <stdexcept>
#include <string>

namespace leakwatch {

// Process exit codes: 0 success, 1 usage/config, 2 data, 3 numeric/training.
enum class ErrorClass { config = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string msg)
        : std::runtime_error(std::move(msg)), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }
    int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

struct ConfigError : Error {
    explicit ConfigError(std::string msg) : Error(ErrorClass::config, std::move(msg)) {}
};

struct ValidationError : Error {
    explicit ValidationError(std::string msg) : Error(ErrorClass::config, std::move(msg)) {}
};

// File content that cannot be parsed; carries "path:line" context.
struct ParseError : Error {
    explicit ParseError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

// Non-uniform, duplicated or off-grid timestamps.
struct AlignmentError : Error {
    explicit AlignmentError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

// Missing samples under the strict gap policy.
struct GapError : Error {
    explicit GapError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct RangeError : Error {
    explicit RangeError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

// A caller violated an interface contract (shape/id mismatch, missing channel).
struct ContractError : Error {
    explicit ContractError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct NumericError : Error {
    explicit NumericError(std::string msg) : Error(ErrorClass::numeric, std::move(msg)) {}
};

struct SingularFitError : Error {
    explicit SingularFitError(std::string msg) : Error(ErrorClass::numeric, std::move(msg)) {}
};

struct TrainingError : Error {
    explicit TrainingError(std::string msg) : Error(ErrorClass::numeric, std::move(msg)) {}
};

} // namespace leakwatch
