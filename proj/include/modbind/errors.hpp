#pragma once

#include <stdexcept>
#include <string>

namespace modbind {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// class to a process exit code: config=2, format=3, numeric=4.
class Error : public std::runtime_error {
public:
    Error(std::string message, int exit_code)
        : std::runtime_error(std::move(message)), exit_code_(exit_code) {}

    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

// Inconsistent or invalid run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(std::string message) : Error(std::move(message), 2) {}
};

// Operand shapes do not agree. Surfaces as a config problem at the CLI.
class DimensionError : public Error {
public:
    explicit DimensionError(std::string message) : Error(std::move(message), 2) {}
};

// An API precondition was violated (non-scalar backward root, bad index...).
class ContractError : public Error {
public:
    explicit ContractError(std::string message) : Error(std::move(message), 2) {}
};

// Malformed, truncated, or trailing-garbage persistent file.
class FormatError : public Error {
public:
    explicit FormatError(std::string message) : Error(std::move(message), 3) {}
};

// A computation produced NaN/infinity or numerically unusable input.
class NumericError : public Error {
public:
    explicit NumericError(std::string message) : Error(std::move(message), 4) {}
};

// Input row too close to zero to normalize.
class DegenerateInputError : public NumericError {
public:
    explicit DegenerateInputError(std::string message)
        : NumericError(std::move(message)) {}
};

} // namespace modbind
