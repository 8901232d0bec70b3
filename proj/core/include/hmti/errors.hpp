#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hmti {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  /// Short machine-readable tag used by the CLI error record.
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape_mismatch"; }
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_finite"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class SingularJacobian : public Error {
 public:
  explicit SingularJacobian(const std::string& what, std::ptrdiff_t domain = -1)
      : Error(what), domain_(domain) {}
  const char* kind() const noexcept override { return "singular_jacobian"; }
  std::ptrdiff_t domain() const noexcept { return domain_; }

 private:
  std::ptrdiff_t domain_;
};

/// Newton iteration budget exhausted. `domain()` is -1 for a standalone solve.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual_norm, int iterations,
                 std::ptrdiff_t domain = -1)
      : Error(what), residual_norm_(residual_norm), iterations_(iterations), domain_(domain) {}
  const char* kind() const noexcept override { return "non_convergence"; }
  double residual_norm() const noexcept { return residual_norm_; }
  int iterations() const noexcept { return iterations_; }
  std::ptrdiff_t domain() const noexcept { return domain_; }

 private:
  double residual_norm_;
  int iterations_;
  std::ptrdiff_t domain_;
};

}  // namespace hmti
