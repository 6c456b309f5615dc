#pragma once

#include <stdexcept>
#include <string>

namespace wmforge {

/// Invalid sizes, out-of-range knobs, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller input: empty sequences, length mismatches, missing data.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem and parse failures on persisted artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An optimization stage had no feasible point, even after relaxation.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wmforge
