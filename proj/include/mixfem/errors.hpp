#pragma once

#include <stdexcept>
#include <string>

namespace mixfem {

// Base class for all library errors. `kind()` returns a stable, machine-checkable
// tag such as "invalid-argument" or "absent-mapping"; `what()` carries context.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

// Bad user input: out-of-range index, point outside the reference cell, ...
class InvalidArgumentError : public Error {
public:
  explicit InvalidArgumentError(const std::string& msg) : Error("invalid-argument", msg) {}
};

// Requested operation is outside the supported envelope (degree, nesting depth, ...).
class NotSupportedError : public Error {
public:
  explicit NotSupportedError(const std::string& msg) : Error("not-supported", msg) {}
};

// A variational form violates a structural rule.
class FormError : public Error {
public:
  FormError(const std::string& tag, const std::string& msg) : Error(tag, msg) {}
};

// Mesh-view mapping problems: a cell with no counterpart, or views that do not
// share a parent.
class ViewError : public Error {
public:
  ViewError(const std::string& tag, const std::string& msg) : Error(tag, msg) {}
};

// File parsing / serialization failures.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

// Solver failures (non-convergence, residual check).
class NumericalError : public Error {
public:
  explicit NumericalError(const std::string& msg) : Error("numerical", msg) {}
  NumericalError(const std::string& tag, const std::string& msg) : Error(tag, msg) {}
};

// Structurally or numerically singular operator.
class SingularMatrixError : public NumericalError {
public:
  explicit SingularMatrixError(const std::string& msg) : NumericalError("singular-matrix", msg) {}
};

}  // namespace mixfem
