#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nbed/types.hpp"

namespace nbed {

/// Returns the objective at `point` and writes its gradient into `grad`.
using Objective = std::function<double(std::span<const double> point, std::span<double> grad)>;

struct AdamOptions {
  double step = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int iterations = 1000;
  double divergence_limit = 1e12;  // |loss| above this aborts
};

/// Adam moment state; copyable so training can checkpoint and resume.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamOptions options);

  /// One update using per-coordinate step sizes (`steps.size()` == point size).
  void update(std::span<double> point, std::span<const double> grad, std::span<const double> steps);
  void update(std::span<double> point, std::span<const double> grad);

  const AdamOptions& options() const { return options_; }
  long long iteration() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(long long t, std::vector<double> m, std::vector<double> v);

 private:
  AdamOptions options_;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

struct OptimResult {
  std::vector<double> point;        // final iterate
  std::vector<double> history;      // loss at each iterate, before its update
  std::vector<double> best_point;   // lowest-loss iterate seen
  double best_loss = 0.0;
};

/// Plain Adam loop. Throws DivergedError carrying the iteration index when the
/// loss is non-finite or exceeds the divergence limit.
OptimResult adam_minimize(const Objective& objective, std::vector<double> initial,
                          const AdamOptions& options);

struct LbfgsOptions {
  int iterations = 500;
  int memory = 20;
  double gradient_tolerance = 1e-12;  // stop when ||g||_inf falls below
  double relative_tolerance = 1e-15;  // stop when the loss stalls relatively
  int max_line_search = 40;
};

/// Limited-memory BFGS with a backtracking Armijo line search.
OptimResult lbfgs_minimize(const Objective& objective, std::vector<double> initial,
                           const LbfgsOptions& options);

}  // namespace nbed
