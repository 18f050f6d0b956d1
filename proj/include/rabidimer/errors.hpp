// errors.hpp - exception types shared by every module

#pragma once

#include <stdexcept>
#include <string>

namespace rabidimer {

// Invalid user input (bad parameters, malformed config). CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A truncated Fock space could not hold the dynamics. CLI exit code 3.
class TruncationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Norm drift, eigensolver failure, Krylov stagnation. CLI exit code 4.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rabidimer
