#include "nbed/rk4.hpp"

#include <cmath>
#include <string>

namespace nbed {

void IntegratorConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("integrator: dt must be > 0");
  if (substeps < 1) throw InputError("integrator: substeps must be >= 1");
}

void Rk4Tape::reserve(std::size_t d, int n) {
  dim = d;
  substeps = n;
  stages.resize(static_cast<std::size_t>(n) * 4 * d);
  k.resize(4 * d);
  adj.resize(5 * d);
}

bool rk4_advance(const VectorField& field, std::span<const double> x, const IntegratorConfig& cfg,
                 std::span<double> out, Rk4Tape* tape) {
  const std::size_t d = field.dim();
  const double h = cfg.step();

  thread_local Rk4Tape scratch;
  Rk4Tape& t = tape ? *tape : scratch;
  if (t.dim != d || t.substeps < cfg.substeps) t.reserve(d, cfg.substeps);
  t.h = h;
  t.substeps = cfg.substeps;

  double* k1 = t.k.data();
  double* k2 = k1 + d;
  double* k3 = k2 + d;
  double* k4 = k3 + d;

  std::copy(x.begin(), x.end(), out.begin());
  for (int s = 0; s < cfg.substeps; ++s) {
    double* in1 = t.stages.data() + static_cast<std::size_t>(s) * 4 * d;
    double* in2 = in1 + d;
    double* in3 = in2 + d;
    double* in4 = in3 + d;

    std::copy(out.begin(), out.end(), in1);
    field.eval({in1, d}, {k1, d});
    for (std::size_t i = 0; i < d; ++i) in2[i] = in1[i] + 0.5 * h * k1[i];
    field.eval({in2, d}, {k2, d});
    for (std::size_t i = 0; i < d; ++i) in3[i] = in1[i] + 0.5 * h * k2[i];
    field.eval({in3, d}, {k3, d});
    for (std::size_t i = 0; i < d; ++i) in4[i] = in1[i] + h * k3[i];
    field.eval({in4, d}, {k4, d});
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = in1[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(out[i])) return false;
  }
  return true;
}

void rk4_backward(const VectorField& field, Rk4Tape& tape, std::span<const double> adj_out,
                  std::span<double> adj_in, std::span<double> gtheta) {
  const std::size_t d = tape.dim;
  const double h = tape.h;
  double* a = tape.adj.data();  // running adjoint of the substep output
  double* g1 = a + d;
  double* g2 = g1 + d;
  double* g3 = g2 + d;
  double* gin = g3 + d;

  std::copy(adj_out.begin(), adj_out.end(), a);
  for (int s = tape.substeps - 1; s >= 0; --s) {
    const double* in1 = tape.stages.data() + static_cast<std::size_t>(s) * 4 * d;
    const double* in2 = in1 + d;
    const double* in3 = in2 + d;
    const double* in4 = in3 + d;

    // out = in1 + h/6 (k1 + 2 k2 + 2 k3 + k4); the stage adjoints start from that sum.
    for (std::size_t i = 0; i < d; ++i) {
      g1[i] = (h / 6.0) * a[i];
      g2[i] = (h / 3.0) * a[i];
      g3[i] = (h / 3.0) * a[i];
      gin[i] = (h / 6.0) * a[i];  // adjoint of k4
    }
    // k4 = f(in1 + h k3)
    std::fill(tape.k.begin(), tape.k.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
    double* tmp = tape.k.data();
    field.vjp({in4, d}, {gin, d}, {tmp, d}, gtheta);
    for (std::size_t i = 0; i < d; ++i) {
      a[i] += tmp[i];
      g3[i] += h * tmp[i];
    }
    // k3 = f(in1 + h/2 k2)
    std::fill(tmp, tmp + d, 0.0);
    field.vjp({in3, d}, {g3, d}, {tmp, d}, gtheta);
    for (std::size_t i = 0; i < d; ++i) {
      a[i] += tmp[i];
      g2[i] += 0.5 * h * tmp[i];
    }
    // k2 = f(in1 + h/2 k1)
    std::fill(tmp, tmp + d, 0.0);
    field.vjp({in2, d}, {g2, d}, {tmp, d}, gtheta);
    for (std::size_t i = 0; i < d; ++i) {
      a[i] += tmp[i];
      g1[i] += 0.5 * h * tmp[i];
    }
    // k1 = f(in1)
    std::fill(tmp, tmp + d, 0.0);
    field.vjp({in1, d}, {g1, d}, {tmp, d}, gtheta);
    for (std::size_t i = 0; i < d; ++i) a[i] += tmp[i];
  }
  std::copy(a, a + d, adj_in.begin());
}

Vector rk4_step(const VectorField& field, ConstVecRef x, const IntegratorConfig& cfg) {
  cfg.validate();
  const std::size_t d = field.dim();
  if (static_cast<std::size_t>(x.size()) != d) throw DimensionError("rk4_step: state dimension");
  if (!x.allFinite()) throw InputError("rk4_step: non-finite input state");
  Vector out(d);
  if (!rk4_advance(field, {x.data(), d}, cfg, {out.data(), d}, nullptr)) {
    throw DivergedError("rk4_step: integration diverged", 0);
  }
  return out;
}

Matrix flow_trajectory(const VectorField& field, ConstVecRef x0, const IntegratorConfig& cfg,
                       std::size_t steps) {
  cfg.validate();
  const std::size_t d = field.dim();
  if (static_cast<std::size_t>(x0.size()) != d) {
    throw DimensionError("flow_trajectory: state dimension");
  }
  if (!x0.allFinite()) throw InputError("flow_trajectory: non-finite initial state");
  Matrix traj(steps + 1, d);
  traj.row(0) = x0.transpose();
  for (std::size_t k = 0; k < steps; ++k) {
    if (!rk4_advance(field, {traj.row(k).data(), d}, cfg, {traj.row(k + 1).data(), d}, nullptr)) {
      throw DivergedError("flow_trajectory: integration diverged", k + 1);
    }
  }
  return traj;
}

}  // namespace nbed
