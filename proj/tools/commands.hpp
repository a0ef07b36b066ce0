#pragma once

#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>

#include "config.hpp"
#include "nbed/eval.hpp"

namespace nbed::cli {

/// Output directories and console of one run: <out>/<run-name>/{data,models,reports,figures}.
class RunContext {
 public:
  RunContext(ExperimentConfig cfg, std::ostream& console, bool quiet);

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path data(const std::string& name) const { return root_ / "data" / name; }
  std::filesystem::path models(const std::string& name) const { return root_ / "models" / name; }
  std::filesystem::path reports(const std::string& name) const { return root_ / "reports" / name; }
  std::filesystem::path figures(const std::string& name) const { return root_ / "figures" / name; }

  /// Progress line; suppressed by --quiet.
  void log(const std::string& line);
  /// Result line; always printed.
  void result(const std::string& line);
  void write(const std::filesystem::path& path, const std::string& content);

 private:
  ExperimentConfig cfg_;
  std::filesystem::path root_;
  std::ostream& console_;
  bool quiet_;
  std::mutex mutex_;
};

struct Dataset {
  TimeSeries truth;     // full state after the transient
  TimeSeries observed;  // observed columns, noise applied
  TimeSeries train;
  TimeSeries test;
};

Dataset build_dataset(const ExperimentConfig& cfg);

std::string model_file_name(std::size_t latent_dim);

struct ForecastOptions {
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> observations;
  std::optional<std::filesystem::path> truth;
  std::optional<std::size_t> horizon;
};

struct SeriesSource {
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> series;
};

int cmd_simulate(RunContext& ctx);
int cmd_train(RunContext& ctx, bool resume);
int cmd_forecast(RunContext& ctx, const ForecastOptions& opts);
int cmd_benchmark(RunContext& ctx, bool reuse_models);
int cmd_lyapunov(RunContext& ctx, const SeriesSource& source);
int cmd_spectrum(RunContext& ctx, const std::optional<std::filesystem::path>& model);
int cmd_embed_params(RunContext& ctx);

}  // namespace nbed::cli
