#pragma once

#include <functional>
#include <vector>

#include "nbed/rk4.hpp"
#include "nbed/types.hpp"
#include "nbed/vector_field.hpp"

namespace nbed {

struct GradientResult {
  double loss = 0.0;
  std::vector<double> grad_theta;
  Matrix grad_latent;  // T x (d - n)
};

/// Joint objective over observed series `x` (T x n) and latent series `y`
/// (T x (d - n)), with augmented rows X_t = [x_t, y_t]:
///
///   sum_{t>=1} ||x_t - G(Phi(X_{t-1}))||^2 + lambda ||X_t - Phi(X_{t-1})||^2
///
/// Gradients are exact reverse-mode derivatives through the RK4 unroll.
GradientResult loss_and_gradients(const VectorField& field, const Matrix& x, const Matrix& y,
                                  double lambda, const IntegratorConfig& cfg);

/// Concatenates observed and latent columns into augmented states.
Matrix augment(const Matrix& x, const Matrix& y);

/// Central-difference gradient of a scalar function; used as a test oracle.
std::vector<double> central_difference_gradient(const std::function<double(const std::vector<double>&)>& f,
                                                const std::vector<double>& point, double h);

/// Central-difference Jacobian of a vector field (row-major d x d).
Matrix finite_difference_jacobian(const VectorField& field, ConstVecRef x, double h);

}  // namespace nbed
