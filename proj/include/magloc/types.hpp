// Core value types and error taxonomy shared across the library.
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace magloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kVacuumPermeability = 4.0 * 3.14159265358979323846 * 1e-7;  // T*m/A
inline constexpr double kPi = 3.14159265358979323846;

/// Thrown when an operation is evaluated too close to a field source.
class SingularityError : public std::domain_error {
 public:
  explicit SingularityError(const std::string& what) : std::domain_error(what) {}
};

/// Input outside an operation's domain (non-positive magnitude, bad band, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

class InvalidArgumentError : public std::invalid_argument {
 public:
  explicit InvalidArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Not enough (distinct) samples to fit a model.
class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& what) : std::runtime_error(what) {}
};

/// Anchor constellation too degenerate to solve.
class GeometryError : public std::runtime_error {
 public:
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative solver failed to converge; carries the last iterate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last)
      : std::runtime_error(what), last_iterate(std::move(last)) {}
  Eigen::VectorXd last_iterate;
};

/// File or record layout does not match the documented schema.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace magloc
