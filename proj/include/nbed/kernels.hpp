#pragma once

#include <cstddef>
#include <vector>

#include "nbed/rk4.hpp"
#include "nbed/types.hpp"
#include "nbed/vector_field.hpp"

namespace nbed::kernels {

/// Inputs of the joint one-step objective over an augmented trajectory:
///
///   L = sum_{t=1}^{T-1} || w_t * (x_t - G(Phi(X_{t-1}))) ||^2 + lambda || X_t - Phi(X_{t-1}) ||^2
///
/// where G keeps the first n = obs.cols() components and w_t is the optional
/// per-entry observation weight (1 where observed, 0 where masked).
struct TrajectoryProblem {
  const VectorField* field = nullptr;
  const Matrix* states = nullptr;   // T x d augmented states
  const Matrix* obs = nullptr;      // T x n observation targets
  const Matrix* weights = nullptr;  // T x n, or null for all-ones
  double lambda = 1.0;
  IntegratorConfig integrator;
};

struct TrajectoryGradient {
  double loss = 0.0;
  std::vector<double> grad_theta;  // empty when not requested
  Matrix grad_states;              // T x d, empty when not requested
};

struct GradientRequest {
  bool theta = true;
  bool states = true;
};

/// Timesteps per reduction block. Blocks are summed in index order, so
/// results do not depend on the thread count.
inline constexpr std::size_t kReductionBlock = 256;

/// Straight single-loop reference implementation.
TrajectoryGradient trajectory_loss_serial(const TrajectoryProblem& problem, GradientRequest request);

/// OpenMP implementation with fixed-order blocked reduction.
TrajectoryGradient trajectory_loss_parallel(const TrajectoryProblem& problem,
                                            GradientRequest request);

/// Loss value only (no tape), parallel with the same blocked reduction.
double trajectory_loss_value(const TrajectoryProblem& problem);

/// Index of the nearest row of `points` to `query` (squared Euclidean), skipping
/// rows whose index lies within `exclusion` of `self` (pass self = npos to skip
/// nothing). Ties resolve to the smallest index.
inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

struct Neighbor {
  std::size_t index = npos;
  double dist2 = 0.0;
};

/// k nearest rows of `points` to `query`, sorted by (distance, index).
std::vector<Neighbor> knn_serial(const Matrix& points, const double* query, std::size_t k,
                                 std::size_t self = npos, std::size_t exclusion = 0);

/// Nearest neighbour of every row of `points` among the other rows, excluding
/// |i - j| <= exclusion. Row i of the result is npos when no candidate exists.
std::vector<Neighbor> all_nearest_serial(const Matrix& points, std::size_t exclusion);
std::vector<Neighbor> all_nearest_parallel(const Matrix& points, std::size_t exclusion);

}  // namespace nbed::kernels
