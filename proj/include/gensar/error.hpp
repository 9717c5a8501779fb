#pragma once

#include <stdexcept>
#include <string>

namespace gensar {

// Thrown on shape mismatches in any dense op.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required input file or directory is absent. CLI maps this to exit code 2.
struct MissingInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration (bad value, violated invariant). CLI exit code 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or other numerical failure. CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gensar
