#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lattice_laws {

class LatticeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMatrix : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class SeriesDivergence : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

/// The two log-determinant routes disagree beyond tolerance.
class LogDetMismatch : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class OutOfBall : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class DegenerateGreen : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class DomainError : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class StepUnderflow : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class BallUnreachable : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

class ConfigError : public LatticeError {
 public:
  using LatticeError::LatticeError;
};

using WarningHandler = std::function<void(std::string_view)>;

/// Installs the sink for advisory warnings (states slightly outside the ball,
/// unsupported spectral regimes). Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace lattice_laws
