#include "nbed/gradients.hpp"

#include "nbed/kernels.hpp"

namespace nbed {

Matrix augment(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw DimensionError("augment: observed and latent row counts differ");
  Matrix states(x.rows(), x.cols() + y.cols());
  states.leftCols(x.cols()) = x;
  states.rightCols(y.cols()) = y;
  return states;
}

GradientResult loss_and_gradients(const VectorField& field, const Matrix& x, const Matrix& y,
                                  double lambda, const IntegratorConfig& cfg) {
  if (x.rows() < 2) throw InputError("loss_and_gradients: need T >= 2");
  if (static_cast<std::size_t>(x.cols() + y.cols()) != field.dim()) {
    throw DimensionError("loss_and_gradients: observed + latent width != field dimension");
  }
  const Matrix states = augment(x, y);
  kernels::TrajectoryProblem problem;
  problem.field = &field;
  problem.states = &states;
  problem.obs = &x;
  problem.lambda = lambda;
  problem.integrator = cfg;
  auto g = kernels::trajectory_loss_parallel(problem, {});

  GradientResult out;
  out.loss = g.loss;
  out.grad_theta = std::move(g.grad_theta);
  out.grad_latent = g.grad_states.rightCols(y.cols());
  return out;
}

std::vector<double> central_difference_gradient(const std::function<double(const std::vector<double>&)>& f,
                                                const std::vector<double>& point, double h) {
  std::vector<double> grad(point.size());
  std::vector<double> p = point;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(p);
    p[i] = orig - h;
    const double fm = f(p);
    p[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

Matrix finite_difference_jacobian(const VectorField& field, ConstVecRef x, double h) {
  const auto d = static_cast<Eigen::Index>(field.dim());
  Matrix jac(d, d);
  Vector p = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double orig = p[j];
    p[j] = orig + h;
    const Vector fp = eval_field(field, p);
    p[j] = orig - h;
    const Vector fm = eval_field(field, p);
    p[j] = orig;
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

}  // namespace nbed
