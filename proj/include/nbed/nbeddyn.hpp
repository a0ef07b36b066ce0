#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nbed/bilinear_model.hpp"
#include "nbed/dynamics.hpp"
#include "nbed/optim.hpp"
#include "nbed/rk4.hpp"
#include "nbed/types.hpp"

namespace nbed {

/// Observed data x (fixed) next to the optimisable latent components y.
/// Augmented row t is X_t = [x_t, y_t] (observed first).
struct LatentTrajectory {
  Matrix x;  // T x n
  Matrix y;  // T x (d_E - n)

  std::size_t length() const { return static_cast<std::size_t>(x.rows()); }
  Matrix augmented() const;
};

struct TrainConfig {
  double lambda = 1.0;
  int epochs = 5000;
  double theta_step = 1e-3;
  double latent_step = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double latent_init_scale = 0.1;
  double theta_init_scale = 0.0;  // 0 starts from the zero field
  IntegratorConfig integrator;
  // Alternating mode: `alternate_period` epochs on y with theta frozen, then
  // the same count on theta with y frozen.
  bool alternating = false;
  int alternate_period = 10;
  // Optional L-BFGS refinement of (theta, y) after the Adam epochs.
  int polish_iterations = 0;
  double divergence_limit = 1e12;

  void validate() const;
};

struct TrainedModel {
  BilinearODEModel model;
  LatentTrajectory train_latents;
  std::vector<double> loss_history;  // per epoch, Adam then polish iterations
  TrainConfig config;
  double dt = 1.0;
  double train_rmse = 0.0;  // one-step observed RMSE on the training series
};

/// Full optimiser state, enough to resume training bit-identically.
struct TrainCheckpoint {
  std::vector<double> theta;
  Matrix y;
  long long adam_iteration = 0;
  std::vector<double> adam_m, adam_v;
  std::vector<double> best_theta;
  Matrix best_y;
  double best_loss = 0.0;
  std::vector<double> loss_history;
  int epochs_done = 0;
};

/// Called after every epoch with (epoch index, loss, current latents).
using EpochCallback = std::function<void(int epoch, double loss, const Matrix& y)>;

/// Joint Adam optimisation of the field parameters and latent states.
class Trainer {
 public:
  Trainer(const TimeSeries& observations, Architecture arch, TrainConfig cfg);

  /// Runs `epochs` more Adam epochs (clamped to the configured budget).
  void run(int epochs, const EpochCallback& callback = {});
  /// Runs the remaining epochs and the optional polish stage.
  TrainedModel finish(const EpochCallback& callback = {});

  int epochs_done() const { return state_.epochs_done; }
  double current_loss() const;
  const TrainCheckpoint& checkpoint() const { return state_; }
  void restore(const TrainCheckpoint& checkpoint);

  /// Joint objective at (theta, y) as packed by the trainer: [theta..., y row-major...].
  double objective(std::span<const double> packed, std::span<double> grad) const;

 private:
  TrainedModel assemble(const std::vector<double>& theta, const Matrix& y,
                        std::vector<double> history) const;

  TimeSeries observations_;
  Architecture arch_;
  TrainConfig cfg_;
  mutable BilinearODEModel scratch_model_;
  Adam adam_;
  TrainCheckpoint state_;
};

/// Convenience wrapper: bilinear architecture with the given augmented dimension.
TrainedModel train(const TimeSeries& observations, std::size_t latent_dim, const TrainConfig& cfg);
TrainedModel train(const TimeSeries& observations, const Architecture& arch, const TrainConfig& cfg);

/// i.i.d. N(0, scale^2) latent matrix, deterministic per seed.
Matrix init_latent(std::size_t rows, std::size_t dim, double scale, std::uint64_t seed);

/// One-step observed RMSE of `model` over an augmented trajectory.
double one_step_rmse(const VectorField& model, const Matrix& states, std::size_t observed_dim,
                     const IntegratorConfig& integrator);

struct NearestWindow {
  std::size_t offset = 0;
  double distance = 0.0;
  Matrix latents;  // window rows of the training latents
};

/// Training window whose observations are closest (L2) to `new_obs`; ties go
/// to the smallest offset.
NearestWindow nearest_training_init(const TrainedModel& trained, const TimeSeries& new_obs);

enum class InitStrategy { random, nearest_training };

struct InferenceConfig {
  InitStrategy init = InitStrategy::nearest_training;
  int iterations = 2000;
  double step = 1e-2;
  int polish_iterations = 200;
  std::uint64_t seed = 0;
  std::optional<double> lambda;  // defaults to the training lambda
  std::optional<Matrix> mask;    // T x n, 1 = observed, 0 = missing
};

struct InferenceResult {
  Vector final_state;  // X_T
  Matrix states;       // inferred augmented window, T x d_E
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;
};

/// Latent inference over a new observation window with the model frozen.
/// Free variables: every latent entry plus the masked observed entries.
InferenceResult infer_initial_condition(const TrainedModel& trained, const TimeSeries& new_obs,
                                        const InferenceConfig& cfg);

/// Integrates the trained field from `state` and returns the observed
/// components at steps 1..horizon.
TimeSeries forecast(const TrainedModel& trained, const Vector& state, std::size_t horizon);

/// Same, returning full augmented states (rows 1..horizon).
Matrix forecast_states(const TrainedModel& trained, const Vector& state, std::size_t horizon);

}  // namespace nbed
