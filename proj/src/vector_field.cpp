#include "nbed/vector_field.hpp"

#include <algorithm>
#include <string>

namespace nbed {

namespace {

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace

LinearField::LinearField(const Matrix& a) : dim_(static_cast<std::size_t>(a.rows())) {
  if (a.rows() != a.cols()) throw DimensionError("LinearField: matrix must be square");
  theta_.assign(a.data(), a.data() + a.size());
}

void LinearField::set_params(std::span<const double> theta) {
  check_dim(theta.size(), theta_.size(), "LinearField::set_params");
  theta_.assign(theta.begin(), theta.end());
}

void LinearField::eval(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < dim_; ++i) {
    double acc = 0.0;
    const double* row = theta_.data() + i * dim_;
    for (std::size_t j = 0; j < dim_; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

void LinearField::jacobian(std::span<const double>, std::span<double> jac) const {
  std::copy(theta_.begin(), theta_.end(), jac.begin());
}

void LinearField::vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
                      std::span<double> gtheta) const {
  for (std::size_t i = 0; i < dim_; ++i) {
    const double* row = theta_.data() + i * dim_;
    double* grow = gtheta.data() + i * dim_;
    for (std::size_t j = 0; j < dim_; ++j) {
      gx[j] += v[i] * row[j];
      grow[j] += v[i] * x[j];
    }
  }
}

Lorenz63Field::Lorenz63Field(LorenzParams p) : theta_{p.sigma, p.rho, p.beta} {}

void Lorenz63Field::set_params(std::span<const double> theta) {
  check_dim(theta.size(), 3, "Lorenz63Field::set_params");
  theta_.assign(theta.begin(), theta.end());
}

void Lorenz63Field::eval(std::span<const double> x, std::span<double> out) const {
  const double s = theta_[0], r = theta_[1], b = theta_[2];
  out[0] = s * (x[1] - x[0]);
  out[1] = x[0] * (r - x[2]) - x[1];
  out[2] = x[0] * x[1] - b * x[2];
}

void Lorenz63Field::jacobian(std::span<const double> x, std::span<double> jac) const {
  const double s = theta_[0], r = theta_[1], b = theta_[2];
  jac[0] = -s;
  jac[1] = s;
  jac[2] = 0.0;
  jac[3] = r - x[2];
  jac[4] = -1.0;
  jac[5] = -x[0];
  jac[6] = x[1];
  jac[7] = x[0];
  jac[8] = -b;
}

void Lorenz63Field::vjp(std::span<const double> x, std::span<const double> v,
                        std::span<double> gx, std::span<double> gtheta) const {
  const double s = theta_[0], r = theta_[1], b = theta_[2];
  gx[0] += -s * v[0] + (r - x[2]) * v[1] + x[1] * v[2];
  gx[1] += s * v[0] - v[1] + x[0] * v[2];
  gx[2] += -x[0] * v[1] - b * v[2];
  gtheta[0] += (x[1] - x[0]) * v[0];
  gtheta[1] += x[0] * v[1];
  gtheta[2] += -x[2] * v[2];
}

Matrix jacobian_at(const VectorField& field, ConstVecRef x) {
  const auto d = field.dim();
  check_dim(static_cast<std::size_t>(x.size()), d, "jacobian_at");
  Matrix jac(d, d);
  field.jacobian({x.data(), d}, {jac.data(), d * d});
  return jac;
}

Vector eval_field(const VectorField& field, ConstVecRef x) {
  const auto d = field.dim();
  check_dim(static_cast<std::size_t>(x.size()), d, "eval_field");
  Vector out(d);
  field.eval({x.data(), d}, {out.data(), d});
  return out;
}

}  // namespace nbed
