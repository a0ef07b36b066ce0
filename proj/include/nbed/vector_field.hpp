#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nbed/types.hpp"

namespace nbed {

/// Autonomous parametric vector field X -> f_theta(X) on R^d.
///
/// Implementations are pure: calls with the same (theta, X) return
/// bit-identical results, and const members may be used concurrently.
class VectorField {
 public:
  virtual ~VectorField() = default;

  virtual std::size_t dim() const = 0;
  virtual std::span<const double> params() const = 0;
  virtual void set_params(std::span<const double> theta) = 0;

  std::size_t num_params() const { return params().size(); }

  virtual void eval(std::span<const double> x, std::span<double> out) const = 0;

  /// Row-major d x d Jacobian df/dX.
  virtual void jacobian(std::span<const double> x, std::span<double> jac) const = 0;

  /// Vector-Jacobian product: gx += v^T df/dX, gtheta += v^T df/dtheta.
  virtual void vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
                   std::span<double> gtheta) const = 0;
};

/// f(X) = A X, theta = row-major A.
class LinearField final : public VectorField {
 public:
  explicit LinearField(const Matrix& a);

  std::size_t dim() const override { return dim_; }
  std::span<const double> params() const override { return theta_; }
  void set_params(std::span<const double> theta) override;

  void eval(std::span<const double> x, std::span<double> out) const override;
  void jacobian(std::span<const double> x, std::span<double> jac) const override;
  void vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
           std::span<double> gtheta) const override;

 private:
  std::size_t dim_;
  std::vector<double> theta_;
};

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

/// Lorenz-63 right-hand side, theta = (sigma, rho, beta).
class Lorenz63Field final : public VectorField {
 public:
  explicit Lorenz63Field(LorenzParams p = {});

  std::size_t dim() const override { return 3; }
  std::span<const double> params() const override { return theta_; }
  void set_params(std::span<const double> theta) override;

  void eval(std::span<const double> x, std::span<double> out) const override;
  void jacobian(std::span<const double> x, std::span<double> jac) const override;
  void vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
           std::span<double> gtheta) const override;

 private:
  std::vector<double> theta_;
};

/// Returns the Jacobian of `field` at `x` as a matrix.
Matrix jacobian_at(const VectorField& field, ConstVecRef x);

/// Convenience evaluation returning a fresh vector.
Vector eval_field(const VectorField& field, ConstVecRef x);

}  // namespace nbed
