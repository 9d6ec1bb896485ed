#pragma once

#include <stdexcept>
#include <string>

namespace rlcer {

// Shared error categories used across modules. Module-specific errors live
// in the module headers.
struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rlcer
