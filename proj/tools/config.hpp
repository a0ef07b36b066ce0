#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbed/baselines.hpp"
#include "nbed/dynamics.hpp"
#include "nbed/nbeddyn.hpp"

namespace nbed::cli {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kEnvPrefix = "NBED_";

/// Invalid configuration; the message starts with the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what) : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct DatasetConfig {
  std::string system = "lorenz63";  // lorenz63 | linear_complex | two_mode | csv
  double dt = 0.01;
  std::size_t transient = 1000;
  std::size_t train_length = 10000;
  std::size_t test_length = 3000;
  std::vector<double> initial_state{1.0, 1.0, 1.0};
  LorenzParams lorenz;
  double alpha_re = -0.1, alpha_im = -0.5;
  double z0_re = 0.5, z0_im = 0.0;
  std::size_t grid_points = 40;  // two_mode
  double omega = 0.5;            // two_mode
  std::size_t pca_components = 0;  // 0 keeps the raw columns
  std::vector<std::size_t> observe{0};  // empty selects every column
  double noise = 0.0;
  std::string path;  // csv source
};

struct ModelConfig {
  std::vector<std::size_t> latent_dims{6};
  bool quadratic = true;
  std::size_t layers = 0;
  std::size_t width = 0;
  TrainConfig train;
  int snapshot_every = 0;    // 0 disables latent snapshots
  int checkpoint_every = 0;  // 0 disables checkpoints
  std::optional<double> loss_gate;
};

struct InferenceSection {
  std::size_t window = 50;
  InferenceConfig inference;
};

struct AnalogSpec {
  std::size_t tau = 10, dim = 3, k = 40;
  AnalogRegression regression = AnalogRegression::locally_linear;
};

struct SparseSpec {
  std::size_t tau = 10, dim = 3;
  double threshold = 0.05;
};

struct BaselinesConfig {
  bool nbeddyn = true;
  std::vector<AnalogSpec> analog;
  std::vector<SparseSpec> sparse;
  std::size_t max_lag = 100;
  std::size_t bins = 32;
  std::size_t max_dim = 8;
};

struct EvaluationConfig {
  std::vector<std::size_t> horizons{1, 4};
  std::size_t stride = 50;
  std::size_t lyapunov_steps = 10000;
  std::size_t spectrum_stride = 10;
  double spectrum_threshold = 1e-2;
  std::size_t overlay_length = 300;
  std::size_t forecast_horizon = 200;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string run_name = "run";
  std::string output_dir = "runs";
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ModelConfig model;
  InferenceSection inference;
  BaselinesConfig baselines;
  EvaluationConfig evaluation;

  Architecture architecture(std::size_t latent_dim, std::size_t observed_dim) const;
  /// Train config for one augmented dimension with the run seed applied.
  TrainConfig train_config() const;
};

/// Applies NBED_SECTION__KEY=value overrides found in `env` (KEY=VALUE
/// strings) onto a raw document. Values are parsed as JSON when possible,
/// otherwise taken as strings.
void apply_env_overrides(nlohmann::json& doc, const std::vector<std::string>& env);
std::vector<std::string> process_environment();

/// Validates a raw document and fills every default. Unknown keys and bad
/// values raise ConfigError naming the key path.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& env);

/// Canonical document with all defaults filled in.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Stable 64-bit digest of the canonical document, as hex.
std::string config_digest(const ExperimentConfig& cfg);

}  // namespace nbed::cli
