#pragma once

#include <stdexcept>
#include <string>

namespace qtg {

// Shape and contract violations are caller bugs; data and numeric errors are
// runtime conditions that the CLI maps to distinct exit codes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace qtg
