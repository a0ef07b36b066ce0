#include "nbed/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nbed::kernels {

namespace {

void validate(const TrajectoryProblem& p) {
  if (!p.field || !p.states || !p.obs) throw InputError("trajectory loss: incomplete problem");
  const auto d = static_cast<Eigen::Index>(p.field->dim());
  if (p.states->cols() != d) {
    throw DimensionError("trajectory loss: state width " + std::to_string(p.states->cols()) +
                         " != field dimension " + std::to_string(d));
  }
  if (p.obs->rows() != p.states->rows()) {
    throw DimensionError("trajectory loss: observation and state row counts differ");
  }
  if (p.obs->cols() > d || p.obs->cols() < 1) {
    throw DimensionError("trajectory loss: observed dimension must be in [1, d]");
  }
  if (p.weights && (p.weights->rows() != p.obs->rows() || p.weights->cols() != p.obs->cols())) {
    throw DimensionError("trajectory loss: weight matrix shape differs from observations");
  }
  if (p.states->rows() < 2) throw InputError("trajectory loss: need at least 2 time steps");
  if (!(p.lambda >= 0.0)) throw InputError("trajectory loss: lambda must be >= 0");
  p.integrator.validate();
}

// Per-thread buffers for one time step.
struct StepScratch {
  Rk4Tape tape;
  std::vector<double> pred, dpred, adj_in;

  explicit StepScratch(std::size_t d, int substeps) : pred(d), dpred(d), adj_in(d) {
    tape.reserve(d, substeps);
  }
};

// Forward + optional backward for the transition (t-1) -> t.
// Writes dL/dX_t (target path) into target_row and dL/dX_{t-1} (integration
// path) into input_row when those are non-null.
double step_contribution(const TrajectoryProblem& p, std::size_t t, StepScratch& s,
                         double* target_row, double* input_row, std::span<double> gtheta) {
  const std::size_t d = p.field->dim();
  const std::size_t n = static_cast<std::size_t>(p.obs->cols());
  const double* prev = p.states->row(static_cast<Eigen::Index>(t - 1)).data();
  const double* cur = p.states->row(static_cast<Eigen::Index>(t)).data();
  const double* obs = p.obs->row(static_cast<Eigen::Index>(t)).data();
  const double* w = p.weights ? p.weights->row(static_cast<Eigen::Index>(t)).data() : nullptr;

  const bool backward = target_row || input_row || !gtheta.empty();
  if (!rk4_advance(*p.field, {prev, d}, p.integrator, s.pred, backward ? &s.tape : nullptr)) {
    throw DivergedError("trajectory loss: integration diverged", t);
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = cur[i] - s.pred[i];
    loss += p.lambda * r * r;
    s.dpred[i] = -2.0 * p.lambda * r;
    if (target_row) target_row[i] = 2.0 * p.lambda * r;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    const double r = wi * (obs[i] - s.pred[i]);
    loss += r * r;
    s.dpred[i] += -2.0 * wi * r;
  }
  if (!backward) return loss;

  rk4_backward(*p.field, s.tape, s.dpred, s.adj_in, gtheta);
  if (input_row) std::copy(s.adj_in.begin(), s.adj_in.end(), input_row);
  return loss;
}

void check_loss(double loss) {
  if (!std::isfinite(loss)) throw DivergedError("trajectory loss: non-finite loss", 0);
}

}  // namespace

TrajectoryGradient trajectory_loss_serial(const TrajectoryProblem& p, GradientRequest request) {
  validate(p);
  const std::size_t d = p.field->dim();
  const std::size_t T = static_cast<std::size_t>(p.states->rows());

  TrajectoryGradient out;
  if (request.theta) out.grad_theta.assign(p.field->num_params(), 0.0);
  if (request.states) out.grad_states = Matrix::Zero(static_cast<Eigen::Index>(T), d);

  StepScratch s(d, p.integrator.substeps);
  std::vector<double> target(d), input(d), gtheta_scratch;
  std::span<double> gtheta = out.grad_theta;
  if (!request.theta && request.states) {
    gtheta_scratch.assign(p.field->num_params(), 0.0);
    gtheta = gtheta_scratch;
  }
  for (std::size_t t = 1; t < T; ++t) {
    out.loss += step_contribution(p, t, s, request.states ? target.data() : nullptr,
                                  request.states ? input.data() : nullptr, gtheta);
    if (request.states) {
      for (std::size_t i = 0; i < d; ++i) {
        out.grad_states(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) += target[i];
        out.grad_states(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(i)) += input[i];
      }
    }
  }
  check_loss(out.loss);
  return out;
}

TrajectoryGradient trajectory_loss_parallel(const TrajectoryProblem& p, GradientRequest request) {
  validate(p);
  const std::size_t d = p.field->dim();
  const std::size_t T = static_cast<std::size_t>(p.states->rows());
  const std::size_t np = p.field->num_params();
  const std::size_t steps = T - 1;
  const std::size_t blocks = (steps + kReductionBlock - 1) / kReductionBlock;
  const bool need_theta_buffer = request.theta || request.states;

  std::vector<double> block_loss(blocks, 0.0);
  std::vector<double> block_theta(need_theta_buffer ? blocks * np : 0, 0.0);
  Matrix target_part, input_part;
  if (request.states) {
    target_part = Matrix::Zero(static_cast<Eigen::Index>(T), d);
    input_part = Matrix::Zero(static_cast<Eigen::Index>(T), d);
  }

  bool failed = false;
  std::size_t failed_at = 0;
  std::string failure;

#pragma omp parallel
  {
    StepScratch s(d, p.integrator.substeps);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
      const std::size_t first = 1 + static_cast<std::size_t>(b) * kReductionBlock;
      const std::size_t last = std::min(T, first + kReductionBlock);
      std::span<double> gtheta;
      if (need_theta_buffer) gtheta = {block_theta.data() + static_cast<std::size_t>(b) * np, np};
      double acc = 0.0;
      try {
        for (std::size_t t = first; t < last; ++t) {
          double* trow = request.states ? target_part.row(static_cast<Eigen::Index>(t)).data() : nullptr;
          double* irow =
              request.states ? input_part.row(static_cast<Eigen::Index>(t - 1)).data() : nullptr;
          acc += step_contribution(p, t, s, trow, irow, gtheta);
        }
      } catch (const DivergedError& e) {
#pragma omp critical(nbed_kernel_failure)
        {
          if (!failed || e.index() < failed_at) {
            failed = true;
            failed_at = e.index();
            failure = "trajectory loss: integration diverged";
          }
        }
      }
      block_loss[static_cast<std::size_t>(b)] = acc;
    }
  }
  if (failed) throw DivergedError(failure, failed_at);

  TrajectoryGradient out;
  for (double l : block_loss) out.loss += l;
  check_loss(out.loss);
  if (request.theta) {
    out.grad_theta.assign(np, 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t k = 0; k < np; ++k) out.grad_theta[k] += block_theta[b * np + k];
    }
  }
  if (request.states) out.grad_states = target_part + input_part;
  return out;
}

double trajectory_loss_value(const TrajectoryProblem& p) {
  return trajectory_loss_parallel(p, GradientRequest{false, false}).loss;
}

std::vector<Neighbor> knn_serial(const Matrix& points, const double* query, std::size_t k,
                                 std::size_t self, std::size_t exclusion) {
  const std::size_t rows = static_cast<std::size_t>(points.rows());
  const std::size_t d = static_cast<std::size_t>(points.cols());
  std::vector<Neighbor> all;
  all.reserve(rows);
  for (std::size_t j = 0; j < rows; ++j) {
    if (self != npos && (j > self ? j - self : self - j) <= exclusion) continue;
    const double* r = points.row(static_cast<Eigen::Index>(j)).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = r[c] - query[c];
      acc += diff * diff;
    }
    all.push_back({j, acc});
  }
  const auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
  all.resize(k);
  return all;
}

namespace {

Neighbor nearest_of(const Matrix& points, std::size_t i, std::size_t exclusion) {
  const std::size_t rows = static_cast<std::size_t>(points.rows());
  const std::size_t d = static_cast<std::size_t>(points.cols());
  const double* q = points.row(static_cast<Eigen::Index>(i)).data();
  Neighbor best{npos, std::numeric_limits<double>::infinity()};
  for (std::size_t j = 0; j < rows; ++j) {
    if ((j > i ? j - i : i - j) <= exclusion) continue;
    const double* r = points.row(static_cast<Eigen::Index>(j)).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = r[c] - q[c];
      acc += diff * diff;
    }
    if (acc < best.dist2) best = {j, acc};
  }
  return best;
}

}  // namespace

std::vector<Neighbor> all_nearest_serial(const Matrix& points, std::size_t exclusion) {
  std::vector<Neighbor> out(static_cast<std::size_t>(points.rows()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nearest_of(points, i, exclusion);
  return out;
}

std::vector<Neighbor> all_nearest_parallel(const Matrix& points, std::size_t exclusion) {
  std::vector<Neighbor> out(static_cast<std::size_t>(points.rows()));
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
    out[static_cast<std::size_t>(i)] = nearest_of(points, static_cast<std::size_t>(i), exclusion);
  }
  return out;
}

}  // namespace nbed::kernels
