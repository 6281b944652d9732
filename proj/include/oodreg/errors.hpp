#pragma once

#include <stdexcept>
#include <string>

namespace oodreg {

// Error classes map one-to-one onto CLI exit codes (see tools/oodreg_cli.cpp).

/// Invalid argument, shape mismatch, or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or missing input data (CSV, model JSON, grid file).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during optimisation.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] void throw_shape_error(const std::string& what, std::size_t expected,
                                    std::size_t actual);

}  // namespace oodreg
