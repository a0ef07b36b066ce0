#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nbed {

// Time-major storage: one row per sample, contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using VecRef = Eigen::Ref<Vector>;
using ConstVecRef = Eigen::Ref<const Vector>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Raised when an integration, a loss, or an optimizer iterate stops being finite.
// `index` is the integration step, trajectory row, or optimizer iteration.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::size_t index)
      : Error(what + " (at index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace nbed
