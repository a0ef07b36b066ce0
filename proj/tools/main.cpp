#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace fs = std::filesystem;
using namespace nbed::cli;

int main(int argc, char** argv) {
  CLI::App app{"NbedDyn: latent-augmented ODE models from partial observations"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out, "override the output directory");
  app.add_flag("--quiet", quiet, "only print result lines");

  auto* simulate = app.add_subcommand("simulate", "generate truth and observed series");
  auto* train = app.add_subcommand("train", "fit NbedDyn models");
  bool resume = false;
  train->add_flag("--resume", resume, "continue from models/checkpoint_dE*.json");

  auto* forecast = app.add_subcommand("forecast", "infer the latent state from a window and forecast");
  ForecastOptions fopts;
  std::size_t horizon = 0;
  forecast->add_option("--model", fopts.model, "model document")->check(CLI::ExistingFile);
  forecast->add_option("--observations", fopts.observations, "observation window CSV (nan marks gaps)")
      ->check(CLI::ExistingFile);
  forecast->add_option("--truth", fopts.truth, "truth CSV for the forecast horizon")->check(CLI::ExistingFile);
  auto* horizon_opt = forecast->add_option("--horizon", horizon, "forecast steps");

  auto* benchmark = app.add_subcommand("benchmark", "compare NbedDyn, analog and sparse-regression forecasts");
  bool reuse = false;
  benchmark->add_flag("--reuse-models", reuse, "load trained models instead of retraining");

  auto* lyapunov = app.add_subcommand("lyapunov", "largest Lyapunov exponent of a series or model");
  SeriesSource source;
  lyapunov->add_option("--model", source.model, "model document")->check(CLI::ExistingFile);
  lyapunov->add_option("--series", source.series, "series CSV")->check(CLI::ExistingFile);

  auto* spectrum = app.add_subcommand("spectrum", "Jacobian eigenvalue spectrum of a trained model");
  std::optional<fs::path> spectrum_model;
  spectrum->add_option("--model", spectrum_model, "model document")->check(CLI::ExistingFile);

  auto* embed = app.add_subcommand("embed-params", "delay-embedding lag and dimension estimates");

  CLI11_PARSE(app, argc, argv);
  if (source.model && source.series) {
    std::cerr << "lyapunov: --model and --series are exclusive\n";
    return 2;
  }

  try {
    ExperimentConfig cfg;
    const auto env = process_environment();
    if (!config_path.empty()) {
      cfg = load_config(config_path, env);
    } else {
      nlohmann::json doc{{"schema_version", kConfigSchemaVersion}};
      apply_env_overrides(doc, env);
      cfg = parse_config(doc);
    }
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    if (*horizon_opt) fopts.horizon = horizon;

    RunContext ctx(cfg, std::cout, quiet);
    ctx.write(ctx.root() / "config.json", config_to_json(cfg).dump(2) + "\n");
    if (*simulate) return cmd_simulate(ctx);
    if (*train) return cmd_train(ctx, resume);
    if (*forecast) return cmd_forecast(ctx, fopts);
    if (*benchmark) return cmd_benchmark(ctx, reuse);
    if (*lyapunov) return cmd_lyapunov(ctx, source);
    if (*spectrum) return cmd_spectrum(ctx, spectrum_model);
    if (*embed) return cmd_embed_params(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
