#pragma once

#include <stdexcept>
#include <string>

namespace afx {

// Invalid tensor shapes, dimension mismatches, bad axes.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration values, unknown keys, malformed files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values produced from finite inputs, NaN gradients.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace afx
