#pragma once

#include <stdexcept>

namespace mpa {

// Configuration / usage problems: bad CLI flags, malformed config keys,
// requesting a task the model was not built with.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input bytes: images, checkpoints, bitstream containers.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or numeric contract violations at runtime.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mpa
