#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gait {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shape / dimension disagreements.
struct ShapeError : Error {
  using Error::Error;
};

/// NaN/Inf values, diverging losses, failed gradient checks.
struct NumericError : Error {
  using Error::Error;
};

/// File format, decode and filesystem failures.
struct IoError : Error {
  using Error::Error;
};

/// Bad user-supplied configuration.
struct ConfigError : Error {
  using Error::Error;
};

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// When enabled, every op validates its output for NaN/Inf.
/// Defaults to on in debug builds; loss terms are always checked.
bool debug_checks_enabled();
void set_debug_checks(bool on);

void check_all_finite(std::string_view what, std::span<const double> values);

}  // namespace gait
