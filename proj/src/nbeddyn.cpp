#include "nbed/nbeddyn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nbed/gradients.hpp"
#include "nbed/kernels.hpp"

namespace nbed {

namespace {

// Independent streams derived from the user seed.
constexpr std::uint64_t kThetaStream = 0x9e3779b97f4a7c15ULL;

std::vector<double> pack(std::span<const double> theta, const Matrix& y) {
  std::vector<double> out(theta.begin(), theta.end());
  out.insert(out.end(), y.data(), y.data() + y.size());
  return out;
}

// Diagonal change of variables for the L-BFGS polish: each linear and
// quadratic weight is measured in units of its monomial's RMS over the
// trajectory, so weights on X_i X_j (~1e2 on Lorenz) and on X_j (~1e1) are
// equally conditioned. Stacked-layer fields and latents keep unit scale.
std::vector<double> polish_scales(const BilinearODEModel& model, const Matrix& states, std::size_t latent_count) {
  const auto& arch = model.architecture();
  std::vector<double> scale(model.num_params() + latent_count, 1.0);
  if (arch.layers != 0) return scale;
  const double* base = model.params().data();
  const std::size_t d = arch.latent_dim;
  const auto rms = [](const Vector& v) {
    const double r = std::sqrt(v.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, v.size())));
    return r > 0.0 ? 1.0 / r : 1.0;
  };
  const auto off_a = static_cast<std::size_t>(model.linear().data() - base);
  for (std::size_t j = 0; j < d; ++j) {
    const double sj = rms(states.col(static_cast<Eigen::Index>(j)));
    for (std::size_t r = 0; r < arch.block_rows(); ++r) scale[off_a + r * d + j] = sj;
  }
  if (arch.quadratic) {
    const auto off_b = static_cast<std::size_t>(model.quadratic().data() - base);
    const std::size_t pc = arch.pair_count();
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        const Vector u = states.col(static_cast<Eigen::Index>(i)).cwiseProduct(states.col(static_cast<Eigen::Index>(j)));
        const double sp = rms(u);
        const std::size_t p = model.pair_index(i, j);
        for (std::size_t r = 0; r < arch.block_rows(); ++r) scale[off_b + r * pc + p] = sp;
      }
    }
  }
  return scale;
}

}  // namespace

Matrix LatentTrajectory::augmented() const { return augment(x, y); }

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("train: epochs must be >= 1");
  if (!(lambda >= 0.0)) throw InputError("train: lambda must be >= 0");
  if (!(theta_step > 0.0) || !(latent_step > 0.0)) throw InputError("train: step sizes must be > 0");
  if (!(latent_init_scale >= 0.0) || !(theta_init_scale >= 0.0)) {
    throw InputError("train: init scales must be >= 0");
  }
  if (alternating && alternate_period < 1) throw InputError("train: alternate_period must be >= 1");
  if (polish_iterations < 0) throw InputError("train: polish_iterations must be >= 0");
  integrator.validate();
}

Matrix init_latent(std::size_t rows, std::size_t dim, double scale, std::uint64_t seed) {
  if (!(scale >= 0.0)) throw InputError("init_latent: scale must be >= 0");
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  if (scale == 0.0) return y;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
  return y;
}

double one_step_rmse(const VectorField& model, const Matrix& states, std::size_t observed_dim,
                     const IntegratorConfig& integrator) {
  if (states.rows() < 2) throw InputError("one_step_rmse: need at least 2 rows");
  const std::size_t d = model.dim();
  Vector pred(static_cast<Eigen::Index>(d));
  double acc = 0.0;
  for (Eigen::Index t = 1; t < states.rows(); ++t) {
    if (!rk4_advance(model, {states.row(t - 1).data(), d}, integrator, {pred.data(), d}, nullptr)) {
      throw DivergedError("one_step_rmse: integration diverged", static_cast<std::size_t>(t));
    }
    for (std::size_t i = 0; i < observed_dim; ++i) {
      const double r = states(t, static_cast<Eigen::Index>(i)) - pred[static_cast<Eigen::Index>(i)];
      acc += r * r;
    }
  }
  return std::sqrt(acc / static_cast<double>((states.rows() - 1) * static_cast<Eigen::Index>(observed_dim)));
}

Trainer::Trainer(const TimeSeries& observations, Architecture arch, TrainConfig cfg)
    : observations_(observations), arch_(arch), cfg_(cfg), scratch_model_(arch) {
  observations_.validate();
  cfg_.validate();
  arch_.validate();
  if (observations_.length() < 3) throw InputError("train: need at least 3 samples");
  if (arch_.observed_dim != observations_.dim()) {
    throw DimensionError("train: architecture observed dimension != series dimension");
  }
  if (std::abs(cfg_.integrator.dt - observations_.dt) > 1e-12 * observations_.dt) {
    throw InputError("train: integrator dt differs from the series sampling interval");
  }
  BilinearODEModel init(arch_);
  if (cfg_.theta_init_scale > 0.0) init.randomize(cfg_.theta_init_scale, cfg_.seed ^ kThetaStream);
  state_.theta.assign(init.params().begin(), init.params().end());
  state_.y = init_latent(observations_.length(), arch_.latent_dim - arch_.observed_dim,
                         cfg_.latent_init_scale, cfg_.seed);
  state_.best_theta = state_.theta;
  state_.best_y = state_.y;
  state_.best_loss = std::numeric_limits<double>::infinity();

  AdamOptions opts;
  opts.beta1 = cfg_.beta1;
  opts.beta2 = cfg_.beta2;
  opts.eps = cfg_.eps;
  opts.divergence_limit = cfg_.divergence_limit;
  adam_ = Adam(state_.theta.size() + static_cast<std::size_t>(state_.y.size()), opts);
}

double Trainer::objective(std::span<const double> packed, std::span<double> grad) const {
  const std::size_t np = scratch_model_.num_params();
  scratch_model_.set_params(packed.subspan(0, np));
  const auto rows = static_cast<Eigen::Index>(observations_.length());
  const auto lat = static_cast<Eigen::Index>(arch_.latent_dim - arch_.observed_dim);
  Matrix states(rows, static_cast<Eigen::Index>(arch_.latent_dim));
  states.leftCols(observations_.values.cols()) = observations_.values;
  if (lat > 0) {
    states.rightCols(lat) = Eigen::Map<const Matrix>(packed.data() + np, rows, lat);
  }
  kernels::TrajectoryProblem problem;
  problem.field = &scratch_model_;
  problem.states = &states;
  problem.obs = &observations_.values;
  problem.lambda = cfg_.lambda;
  problem.integrator = cfg_.integrator;
  if (grad.empty()) return kernels::trajectory_loss_value(problem);

  auto g = kernels::trajectory_loss_parallel(problem, {true, lat > 0});
  std::copy(g.grad_theta.begin(), g.grad_theta.end(), grad.begin());
  if (lat > 0) {
    Eigen::Map<Matrix>(grad.data() + np, rows, lat) = g.grad_states.rightCols(lat);
  }
  return g.loss;
}

double Trainer::current_loss() const {
  const auto packed = pack(state_.theta, state_.y);
  return objective(packed, {});
}

void Trainer::run(int epochs, const EpochCallback& callback) {
  const std::size_t np = state_.theta.size();
  std::vector<double> packed = pack(state_.theta, state_.y);
  std::vector<double> grad(packed.size());
  std::vector<double> steps(packed.size());
  const int target = std::min(cfg_.epochs, state_.epochs_done + std::max(epochs, 0));

  auto unpack = [&](const std::vector<double>& p, std::vector<double>& theta, Matrix& y) {
    theta.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(np));
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(np), p.end(), y.data());
  };

  while (state_.epochs_done < target) {
    const int epoch = state_.epochs_done;
    double theta_step = cfg_.theta_step;
    double latent_step = cfg_.latent_step;
    if (cfg_.alternating) {
      const bool latent_phase = (epoch / cfg_.alternate_period) % 2 == 0;
      (latent_phase ? theta_step : latent_step) = 0.0;
    }
    std::fill(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(np), theta_step);
    std::fill(steps.begin() + static_cast<std::ptrdiff_t>(np), steps.end(), latent_step);

    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = objective(packed, grad);
    if (!std::isfinite(loss) || loss > cfg_.divergence_limit) {
      throw DivergedError("train: loss diverged", static_cast<std::size_t>(epoch));
    }
    state_.loss_history.push_back(loss);
    if (loss < state_.best_loss) {
      state_.best_loss = loss;
      unpack(packed, state_.best_theta, state_.best_y);
    }
    adam_.update(packed, grad, steps);
    unpack(packed, state_.theta, state_.y);
    state_.epochs_done = epoch + 1;
    state_.adam_iteration = adam_.iteration();
    if (callback) callback(epoch, loss, state_.y);
  }
  state_.adam_m = adam_.first_moment();
  state_.adam_v = adam_.second_moment();
}

void Trainer::restore(const TrainCheckpoint& checkpoint) {
  if (checkpoint.theta.size() != state_.theta.size() || checkpoint.y.rows() != state_.y.rows() ||
      checkpoint.y.cols() != state_.y.cols()) {
    throw DimensionError("train: checkpoint shape does not match the trainer");
  }
  state_ = checkpoint;
  adam_.restore(checkpoint.adam_iteration, checkpoint.adam_m, checkpoint.adam_v);
}

TrainedModel Trainer::assemble(const std::vector<double>& theta, const Matrix& y,
                               std::vector<double> history) const {
  TrainedModel out{BilinearODEModel(arch_, theta), LatentTrajectory{observations_.values, y},
                   std::move(history), cfg_, observations_.dt, 0.0};
  out.train_rmse = one_step_rmse(out.model, out.train_latents.augmented(), arch_.observed_dim,
                                 cfg_.integrator);
  return out;
}

TrainedModel Trainer::finish(const EpochCallback& callback) {
  run(cfg_.epochs - state_.epochs_done, callback);

  // The final Adam iterate has not been scored yet.
  const double last = current_loss();
  if (std::isfinite(last) && last < state_.best_loss) {
    state_.best_loss = last;
    state_.best_theta = state_.theta;
    state_.best_y = state_.y;
  }
  std::vector<double> history = state_.loss_history;
  if (cfg_.polish_iterations == 0) return assemble(state_.best_theta, state_.best_y, history);

  LbfgsOptions opts;
  opts.iterations = cfg_.polish_iterations;
  const BilinearODEModel best_model(arch_, state_.best_theta);
  const auto scale = polish_scales(best_model, LatentTrajectory{observations_.values, state_.best_y}.augmented(),
                                   static_cast<std::size_t>(state_.best_y.size()));
  std::vector<double> start = pack(state_.best_theta, state_.best_y);
  for (std::size_t i = 0; i < start.size(); ++i) start[i] /= scale[i];
  std::vector<double> unscaled(start.size());
  auto polished = lbfgs_minimize(
      [&](std::span<const double> p, std::span<double> g) {
        for (std::size_t i = 0; i < p.size(); ++i) unscaled[i] = p[i] * scale[i];
        const double loss = objective(unscaled, g);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale[i];
        return loss;
      },
      std::move(start), opts);
  history.insert(history.end(), polished.history.begin() + 1, polished.history.end());
  for (std::size_t i = 0; i < polished.best_point.size(); ++i) polished.best_point[i] *= scale[i];
  const std::size_t np = state_.best_theta.size();
  std::vector<double> theta(polished.best_point.begin(),
                            polished.best_point.begin() + static_cast<std::ptrdiff_t>(np));
  Matrix y = state_.best_y;
  std::copy(polished.best_point.begin() + static_cast<std::ptrdiff_t>(np), polished.best_point.end(),
            y.data());
  return assemble(theta, y, std::move(history));
}

TrainedModel train(const TimeSeries& observations, const Architecture& arch, const TrainConfig& cfg) {
  Trainer trainer(observations, arch, cfg);
  return trainer.finish();
}

TrainedModel train(const TimeSeries& observations, std::size_t latent_dim, const TrainConfig& cfg) {
  Architecture arch;
  arch.latent_dim = latent_dim;
  arch.observed_dim = observations.dim();
  if (latent_dim <= observations.dim()) {
    throw InputError("train: augmented dimension must exceed the observed dimension");
  }
  return train(observations, arch, cfg);
}

namespace {

NearestWindow nearest_window(const TrainedModel& trained, const Matrix& obs, const Matrix* mask) {
  const Matrix& train_x = trained.train_latents.x;
  const auto w = obs.rows();
  const auto n = obs.cols();
  if (n != train_x.cols()) throw DimensionError("nearest_training_init: observed dimension differs");
  if (w < 1) throw InputError("nearest_training_init: empty window");
  if (w > train_x.rows()) throw InputError("nearest_training_init: window longer than training data");

  NearestWindow best;
  best.distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index o = 0; o + w <= train_x.rows(); ++o) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < w && acc < best.distance; ++t) {
      for (Eigen::Index c = 0; c < n; ++c) {
        const double m = mask ? (*mask)(t, c) : 1.0;
        const double diff = m * (train_x(o + t, c) - obs(t, c));
        acc += diff * diff;
      }
    }
    if (acc < best.distance) {
      best.distance = acc;
      best.offset = static_cast<std::size_t>(o);
    }
  }
  best.distance = std::sqrt(best.distance);
  best.latents = trained.train_latents.y.middleRows(static_cast<Eigen::Index>(best.offset), w);
  return best;
}

}  // namespace

NearestWindow nearest_training_init(const TrainedModel& trained, const TimeSeries& new_obs) {
  return nearest_window(trained, new_obs.values, nullptr);
}

InferenceResult infer_initial_condition(const TrainedModel& trained, const TimeSeries& new_obs,
                                        const InferenceConfig& cfg) {
  const auto& arch = trained.model.architecture();
  const auto w = static_cast<Eigen::Index>(new_obs.length());
  const auto n = static_cast<Eigen::Index>(arch.observed_dim);
  const auto d = static_cast<Eigen::Index>(arch.latent_dim);
  if (w < 2) throw InputError("infer_initial_condition: window needs at least 2 samples");
  if (new_obs.values.cols() != n) throw DimensionError("infer_initial_condition: observed dimension differs");
  if (cfg.iterations < 0 || cfg.polish_iterations < 0) {
    throw InputError("infer_initial_condition: iteration counts must be >= 0");
  }

  Matrix weights = Matrix::Ones(w, n);
  if (cfg.mask) {
    if (cfg.mask->rows() != w || cfg.mask->cols() != n) {
      throw DimensionError("infer_initial_condition: mask shape differs from the window");
    }
    weights = *cfg.mask;
  }
  if (weights.cwiseAbs().sum() == 0.0) {
    throw InputError("infer_initial_condition: every observation is masked");
  }
  // Masked entries carry no data; keep them finite so they can seed the states.
  Matrix obs = new_obs.values;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    if (weights.data()[i] == 0.0) obs.data()[i] = 0.0;
  }
  if (!obs.allFinite()) throw InputError("infer_initial_condition: non-finite observed values");

  Matrix states(w, d);
  states.leftCols(n) = obs;
  if (cfg.init == InitStrategy::nearest_training) {
    const auto nearest = nearest_window(trained, obs, cfg.mask ? &weights : nullptr);
    states.rightCols(d - n) = nearest.latents;
    const Matrix& tx = trained.train_latents.x;
    for (Eigen::Index t = 0; t < w; ++t) {
      for (Eigen::Index c = 0; c < n; ++c) {
        if (weights(t, c) == 0.0) states(t, c) = tx(static_cast<Eigen::Index>(nearest.offset) + t, c);
      }
    }
  } else {
    states.rightCols(d - n) = init_latent(static_cast<std::size_t>(w), static_cast<std::size_t>(d - n),
                                          trained.config.latent_init_scale, cfg.seed);
  }

  // Free variables: latent columns plus masked observed entries, row-major.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> free;
  for (Eigen::Index t = 0; t < w; ++t) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if (c >= n || weights(t, c) == 0.0) free.emplace_back(t, c);
    }
  }

  kernels::TrajectoryProblem problem;
  problem.field = &trained.model;
  problem.obs = &obs;
  problem.weights = &weights;
  problem.lambda = cfg.lambda.value_or(trained.config.lambda);
  problem.integrator = trained.config.integrator;

  Matrix work = states;
  Objective objective = [&](std::span<const double> p, std::span<double> g) {
    for (std::size_t k = 0; k < free.size(); ++k) work(free[k].first, free[k].second) = p[k];
    problem.states = &work;
    if (g.empty()) return kernels::trajectory_loss_value(problem);
    auto r = kernels::trajectory_loss_parallel(problem, {false, true});
    for (std::size_t k = 0; k < free.size(); ++k) g[k] = r.grad_states(free[k].first, free[k].second);
    return r.loss;
  };

  std::vector<double> point(free.size());
  for (std::size_t k = 0; k < free.size(); ++k) point[k] = states(free[k].first, free[k].second);

  InferenceResult out;
  out.initial_loss = objective(point, {});
  std::vector<double> best = point;
  double best_loss = out.initial_loss;
  if (!free.empty() && cfg.iterations > 0) {
    AdamOptions opts;
    opts.step = cfg.step;
    opts.beta1 = trained.config.beta1;
    opts.beta2 = trained.config.beta2;
    opts.eps = trained.config.eps;
    opts.iterations = cfg.iterations;
    opts.divergence_limit = trained.config.divergence_limit;
    auto adam = adam_minimize(objective, point, opts);
    out.loss_history = adam.history;
    if (adam.best_loss < best_loss) {
      best_loss = adam.best_loss;
      best = adam.best_point;
    }
  }
  if (!free.empty() && cfg.polish_iterations > 0) {
    LbfgsOptions opts;
    opts.iterations = cfg.polish_iterations;
    auto polished = lbfgs_minimize(objective, best, opts);
    out.loss_history.insert(out.loss_history.end(), polished.history.begin(), polished.history.end());
    if (polished.best_loss < best_loss) {
      best_loss = polished.best_loss;
      best = polished.best_point;
    }
  }
  for (std::size_t k = 0; k < free.size(); ++k) states(free[k].first, free[k].second) = best[k];
  out.final_loss = best_loss;
  out.states = std::move(states);
  out.final_state = out.states.row(w - 1).transpose();
  return out;
}

Matrix forecast_states(const TrainedModel& trained, const Vector& state, std::size_t horizon) {
  if (horizon < 1) throw InputError("forecast: horizon must be >= 1");
  const Matrix traj = flow_trajectory(trained.model, state, trained.config.integrator, horizon);
  return traj.bottomRows(static_cast<Eigen::Index>(horizon));
}

TimeSeries forecast(const TrainedModel& trained, const Vector& state, std::size_t horizon) {
  const Matrix states = forecast_states(trained, state, horizon);
  const auto n = static_cast<Eigen::Index>(trained.model.architecture().observed_dim);
  return {states.leftCols(n), trained.dt, trained.dt};
}

}  // namespace nbed
