#pragma once

#include <stdexcept>
#include <string>

namespace shortcut {

/// Dimension mismatch between operands. Always a programming error.
struct ShapeError : std::logic_error {
  using std::logic_error::logic_error;
};

/// An API was called out of order or with a missing prerequisite.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid configuration value or unknown key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input data (corpus lines, tags, tokens).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint could not be read back: version, shape or truncation problems.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A loss or gradient went non-finite during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace shortcut
