#pragma once

#include <stdexcept>
#include <string>

namespace dpsr {

// Base of every error raised by the toolkit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or configuration files.
struct ConfigError : Error {
  using Error::Error;
};

// Input arrays with the wrong rank or spatial size.
struct ShapeError : Error {
  using Error::Error;
};

// Values outside their documented domain (ranges, tap indices, channels).
struct ValidationError : Error {
  using Error::Error;
};

// Unreadable, corrupt or incomplete files.
struct LoadError : Error {
  using Error::Error;
};

// A training step produced NaN or Inf.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace dpsr
