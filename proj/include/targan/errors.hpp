#pragma once

#include <stdexcept>
#include <string>

namespace targan {

// Invalid configuration, bad ranges, illegal ablation variants. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image dimension mismatch.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable, unwritable or corrupt files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric that is undefined for its inputs (e.g. RAVD with empty reference).
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace targan
