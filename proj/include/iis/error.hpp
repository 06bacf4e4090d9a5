#pragma once

#include <stdexcept>
#include <string>

namespace iis {

/// Invalid or inconsistent run configuration (bad ranges, wells outside the
/// domain, negative dispersivity, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a result (singular system,
/// non-PD matrix, stability violation).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace iis
