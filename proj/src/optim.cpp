#include "nbed/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace nbed {

Adam::Adam(std::size_t size, AdamOptions options) : options_(options), m_(size, 0.0), v_(size, 0.0) {}

void Adam::update(std::span<double> point, std::span<const double> grad, std::span<const double> steps) {
  if (point.size() != m_.size() || grad.size() != m_.size() || steps.size() != m_.size()) {
    throw DimensionError("Adam::update: size mismatch");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < point.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    point[i] -= steps[i] * mhat / (std::sqrt(vhat) + options_.eps);
  }
}

void Adam::update(std::span<double> point, std::span<const double> grad) {
  std::vector<double> steps(point.size(), options_.step);
  update(point, grad, steps);
}

void Adam::restore(long long t, std::vector<double> m, std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw DimensionError("Adam::restore: size mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

namespace {

void guard(double loss, double limit, std::size_t iteration) {
  if (!std::isfinite(loss) || std::abs(loss) > limit) {
    throw DivergedError("optimizer: loss diverged", iteration);
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

OptimResult adam_minimize(const Objective& objective, std::vector<double> initial,
                          const AdamOptions& options) {
  Adam adam(initial.size(), options);
  OptimResult out;
  out.point = std::move(initial);
  std::vector<double> grad(out.point.size());
  out.history.reserve(static_cast<std::size_t>(std::max(options.iterations, 0)) + 1);
  out.best_point = out.point;
  out.best_loss = std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = objective(out.point, grad);
    guard(loss, options.divergence_limit, static_cast<std::size_t>(it));
    out.history.push_back(loss);
    if (loss < out.best_loss) {
      out.best_loss = loss;
      out.best_point = out.point;
    }
    adam.update(out.point, grad);
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  const double final_loss = objective(out.point, grad);
  guard(final_loss, options.divergence_limit, static_cast<std::size_t>(options.iterations));
  out.history.push_back(final_loss);
  if (final_loss < out.best_loss) {
    out.best_loss = final_loss;
    out.best_point = out.point;
  }
  return out;
}

OptimResult lbfgs_minimize(const Objective& objective, std::vector<double> initial,
                           const LbfgsOptions& options) {
  const std::size_t n = initial.size();
  OptimResult out;
  out.point = std::move(initial);
  std::vector<double> grad(n, 0.0), trial(n), trial_grad(n), dir(n);
  double loss = objective(out.point, grad);
  guard(loss, std::numeric_limits<double>::max(), 0);
  out.history.push_back(loss);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> alpha(static_cast<std::size_t>(options.memory));

  for (int it = 0; it < options.iterations; ++it) {
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < options.gradient_tolerance) break;

    // Two-loop recursion.
    for (std::size_t i = 0; i < n; ++i) dir[i] = -grad[i];
    const std::size_t m = s_hist.size();
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[k] * y_hist[k][i];
    }
    if (m > 0) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : dir) v *= gamma;
    } else {
      const double gnorm = std::sqrt(dot(grad, grad));
      for (double& v : dir) v /= std::max(gnorm, 1.0);
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha[k] - beta) * s_hist[k][i];
    }
    double slope = dot(grad, dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: reset memory and use steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -grad[i];
      slope = -dot(grad, grad);
    }

    double step = 1.0;
    double trial_loss = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = out.point[i] + step * dir[i];
      std::fill(trial_grad.begin(), trial_grad.end(), 0.0);
      try {
        trial_loss = objective(trial, trial_grad);
      } catch (const DivergedError&) {
        trial_loss = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(trial_loss) && trial_loss <= loss + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial[i] - out.point[i];
      y[i] = trial_grad[i] - grad[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-300) {
      if (s_hist.size() == static_cast<std::size_t>(options.memory)) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    const double previous = loss;
    out.point.swap(trial);
    grad.swap(trial_grad);
    loss = trial_loss;
    out.history.push_back(loss);
    if (previous - loss <= options.relative_tolerance * std::max(std::abs(previous), 1e-300)) break;
  }
  out.best_point = out.point;
  out.best_loss = loss;
  return out;
}

}  // namespace nbed
