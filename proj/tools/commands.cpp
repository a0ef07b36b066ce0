#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nbed/io.hpp"

namespace nbed::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kNoiseStream = 0x5deece66dULL;

std::string num(double v) { return io::format_double(v); }

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> column(const Matrix& m, Eigen::Index c, std::size_t limit = 0) {
  const Eigen::Index rows = limit ? std::min<Eigen::Index>(m.rows(), static_cast<Eigen::Index>(limit)) : m.rows();
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) out[static_cast<std::size_t>(i)] = m(i, c);
  return out;
}

std::vector<double> steps(std::size_t count, double first, double dt) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + static_cast<double>(i) * dt;
  return out;
}

std::string augmented_csv(const Matrix& states, double dt) {
  TimeSeries s{states, dt, 0.0};
  return io::series_csv(s);
}

// Two 2-d projections of the first three augmented coordinates.
std::string latent_panels(const Matrix& states, const std::string& title) {
  std::vector<std::pair<io::PlotSpec, io::Series2D>> panels;
  auto panel = [&](Eigen::Index a, Eigen::Index b) {
    io::PlotSpec spec;
    spec.title = "X" + std::to_string(a + 1) + " vs X" + std::to_string(b + 1);
    spec.x_label = "X" + std::to_string(a + 1);
    spec.y_label = "X" + std::to_string(b + 1);
    spec.width = 420;
    spec.height = 400;
    panels.push_back({spec, {"latent", column(states, a), column(states, b)}});
  };
  if (states.cols() >= 2) panel(0, 1);
  if (states.cols() >= 3) panel(1, 2);
  if (panels.empty()) panel(0, 0);
  return io::svg_panels(title, panels);
}

std::string method_slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

// Scalar Rosenstein estimate of the first column; nullopt when the series is unusable.
double scalar_lyapunov(const Matrix& states, double dt) {
  TimeSeries s{states.col(0), dt, 0.0};
  return largest_lyapunov(s).exponent;
}

std::size_t observed_dim_of(const TrainedModel& m) { return m.model.architecture().observed_dim; }

TrainedModel load_run_model(RunContext& ctx, const std::optional<fs::path>& path) {
  const fs::path p = path ? *path : ctx.models(model_file_name(ctx.config().model.latent_dims.front()));
  return io::load_model(p);
}

}  // namespace

RunContext::RunContext(ExperimentConfig cfg, std::ostream& console, bool quiet)
    : cfg_(std::move(cfg)), root_(fs::path(cfg_.output_dir) / cfg_.run_name), console_(console), quiet_(quiet) {
  for (const char* sub : {"data", "models", "reports", "figures"}) fs::create_directories(root_ / sub);
}

void RunContext::log(const std::string& line) {
  if (quiet_) return;
  std::lock_guard<std::mutex> lock(mutex_);
  console_ << line << '\n' << std::flush;
}

void RunContext::result(const std::string& line) {
  std::lock_guard<std::mutex> lock(mutex_);
  console_ << line << '\n' << std::flush;
}

void RunContext::write(const fs::path& path, const std::string& content) {
  io::write_file_atomic(path, content);
  log("  wrote " + path.string());
}

std::string model_file_name(std::size_t latent_dim) { return "model_dE" + std::to_string(latent_dim) + ".json"; }

Dataset build_dataset(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  const std::size_t total = d.transient + d.train_length + d.test_length;
  TimeSeries full;
  if (d.system == "lorenz63") {
    Vector z0 = Eigen::Map<const Vector>(d.initial_state.data(), 3);
    full = simulate_lorenz63(z0, d.dt, total - 1, d.lorenz, cfg.model.train.integrator.substeps);
  } else if (d.system == "linear_complex") {
    full = simulate_linear_complex({d.alpha_re, d.alpha_im}, {d.z0_re, d.z0_im}, d.dt, total - 1);
  } else if (d.system == "two_mode") {
    full = simulate_two_mode_field(d.grid_points, d.omega, d.dt, total - 1);
  } else {
    full = io::read_series_csv(fs::path(d.path)).series;
    if (std::abs(full.dt - d.dt) > 1e-9 * d.dt) {
      throw ConfigError("dataset.dt", "does not match the sampling interval " + num(full.dt) + " of " + d.path);
    }
    if (full.length() < total) {
      throw ConfigError("dataset.test_length", "transient + train_length + test_length = " + std::to_string(total) +
                                                   " exceeds the " + std::to_string(full.length()) + " rows of " + d.path);
    }
    full = full.slice(0, total);
  }
  Dataset out;
  out.truth = full.slice(d.transient, d.train_length + d.test_length);
  out.truth.start_time = 0.0;
  TimeSeries state = out.truth;
  if (d.system == "two_mode" && d.pca_components > 0) {
    const auto pca = pca_fit(state.values.topRows(static_cast<Eigen::Index>(d.train_length)), d.pca_components);
    state.values = pca.transform(state.values);
  }
  std::vector<std::size_t> sel = d.observe;
  if (sel.empty())
    for (std::size_t i = 0; i < state.dim(); ++i) sel.push_back(i);
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (sel[i] >= state.dim())
      throw ConfigError("dataset.observe[" + std::to_string(i) + "]",
                        "index outside the state dimension " + std::to_string(state.dim()));
  }
  out.observed = observe(state, ObservationOperator::select(sel));
  if (d.noise > 0.0) out.observed = add_observation_noise(out.observed, d.noise, cfg.seed ^ kNoiseStream);
  out.train = out.observed.slice(0, d.train_length);
  out.test = out.observed.slice(d.train_length, d.test_length);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_simulate(RunContext& ctx) {
  const auto& cfg = ctx.config();
  const Dataset ds = build_dataset(cfg);
  ctx.write(ctx.data("truth.csv"), io::series_csv(ds.truth));
  ctx.write(ctx.data("observed.csv"), io::series_csv(ds.observed));
  ctx.write(ctx.data("train.csv"), io::series_csv(ds.train));
  if (ds.test.length() > 0) ctx.write(ctx.data("test.csv"), io::series_csv(ds.test));

  io::PlotSpec spec{"observed x1", "t", "x1"};
  ctx.write(ctx.figures("observed.svg"),
            io::svg_line_plot(spec, {{"x1", steps(std::min<std::size_t>(ds.observed.length(), 2000), 0.0, ds.observed.dt),
                                      column(ds.observed.values, 0, 2000)}}));
  ctx.result("simulate: system=" + cfg.dataset.system + " truth=" + std::to_string(ds.truth.length()) + "x" +
             std::to_string(ds.truth.dim()) + " observed=" + std::to_string(ds.observed.dim()) +
             " columns train=" + std::to_string(ds.train.length()) + " test=" + std::to_string(ds.test.length()) +
             " dt=" + num(ds.truth.dt));
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_train(RunContext& ctx, bool resume) {
  const auto& cfg = ctx.config();
  const Dataset ds = build_dataset(cfg);
  const std::string digest = config_digest(cfg);
  const TrainConfig tc = cfg.train_config();
  int status = 0;

  for (std::size_t d : cfg.model.latent_dims) {
    const std::string tag = "dE" + std::to_string(d);
    const fs::path ckpt_path = ctx.models("checkpoint_" + tag + ".json");
    Trainer trainer(ds.train, cfg.architecture(d, ds.train.dim()), tc);
    if (resume && fs::exists(ckpt_path)) {
      const auto doc = io::parse_checkpoint_document(io::read_file(ckpt_path));
      if (doc.config_digest != digest) {
        throw InputError("checkpoint " + ckpt_path.string() + " belongs to a different configuration");
      }
      trainer.restore(doc.state);
      ctx.log("train " + tag + ": resumed at epoch " + std::to_string(trainer.epochs_done()));
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto snapshot = [&](int epoch, const Matrix& y) {
      const Matrix states = LatentTrajectory{ds.train.values, y}.augmented();
      char name[64];
      std::snprintf(name, sizeof name, "latents_%s_epoch%06d", tag.c_str(), epoch);
      ctx.write(ctx.data(std::string(name) + ".csv"), augmented_csv(states, ds.train.dt));
      ctx.write(ctx.figures(std::string(name) + ".svg"),
                latent_panels(states, "augmented state, " + tag + ", epoch " + std::to_string(epoch)));
    };
    const int snap = cfg.model.snapshot_every;
    const int progress = std::max(1, tc.epochs / 20);
    EpochCallback callback = [&](int epoch, double loss, const Matrix& y) {
      if ((epoch + 1) % progress == 0)
        ctx.log("train " + tag + ": epoch " + std::to_string(epoch + 1) + "/" + std::to_string(tc.epochs) +
                " loss " + short_num(loss) + " (" + short_num(seconds_since(t0)) + " s)");
      if (snap > 0 && (epoch == 0 || (epoch + 1) % snap == 0)) snapshot(epoch + 1, y);
    };

    // Chunks end on checkpoint boundaries so each checkpoint carries synced optimiser moments.
    const int chunk = cfg.model.checkpoint_every > 0 ? cfg.model.checkpoint_every : tc.epochs;
    try {
      while (trainer.epochs_done() < tc.epochs) {
        trainer.run(std::min(chunk, tc.epochs - trainer.epochs_done()), callback);
        if (cfg.model.checkpoint_every > 0) {
          ctx.write(ckpt_path, io::checkpoint_document({trainer.checkpoint(), digest}));
        }
      }
    } catch (const DivergedError& e) {
      ctx.result("train " + tag + ": " + e.what() +
                 (cfg.model.checkpoint_every > 0 && fs::exists(ckpt_path) ? "; last good checkpoint kept at " + ckpt_path.string()
                                                                          : ""));
      return 1;
    }
    const TrainedModel model = trainer.finish();

    ctx.write(ctx.models(model_file_name(d)), io::model_document(model));
    io::CsvTable loss{{"epoch", "stage", "loss"}, {}};
    for (std::size_t i = 0; i < model.loss_history.size(); ++i) {
      const bool adam = i < static_cast<std::size_t>(tc.epochs);
      loss.add_row({std::to_string(i), adam ? "adam" : "polish", num(model.loss_history[i])});
    }
    ctx.write(ctx.reports("loss_" + tag + ".csv"), loss.str());
    io::PlotSpec spec{"training loss " + tag, "iteration", "loss", 640, 400, true};
    ctx.write(ctx.figures("loss_" + tag + ".svg"),
              io::svg_line_plot(spec, {{"loss", steps(model.loss_history.size(), 0.0, 1.0), model.loss_history}}));
    if (snap > 0) snapshot(trainer.epochs_done(), model.train_latents.y);

    const double best = *std::min_element(model.loss_history.begin(), model.loss_history.end());
    ctx.result("train " + tag + ": loss " + short_num(best) + " one-step rmse " + short_num(model.train_rmse) +
               " epochs " + std::to_string(tc.epochs) + " (" + short_num(seconds_since(t0)) + " s)");
    if (cfg.model.loss_gate && !(best <= *cfg.model.loss_gate)) {
      ctx.result("train " + tag + ": loss " + short_num(best) + " above the configured gate " +
                 short_num(*cfg.model.loss_gate));
      status = 1;
    }
  }
  return status;
}

// ---------------------------------------------------------------------------

int cmd_forecast(RunContext& ctx, const ForecastOptions& opts) {
  const auto& cfg = ctx.config();
  const std::size_t horizon = opts.horizon.value_or(cfg.evaluation.forecast_horizon);
  if (horizon < 1) throw ConfigError("evaluation.forecast_horizon", "must be >= 1");
  const TrainedModel model = load_run_model(ctx, opts.model);
  const std::size_t n = observed_dim_of(model);

  InferenceConfig ic = cfg.inference.inference;
  ic.seed = cfg.seed;
  TimeSeries window;
  std::optional<Matrix> truth;
  if (opts.observations) {
    auto masked = io::read_series_csv(*opts.observations, model.dt);
    window = masked.series;
    ic.mask = masked.mask;
  } else {
    const Dataset ds = build_dataset(cfg);
    if (ds.test.length() < cfg.inference.window) {
      throw ConfigError("dataset.test_length", "shorter than inference.window");
    }
    window = ds.test.slice(0, cfg.inference.window);
    const std::size_t avail = std::min(horizon, ds.test.length() - cfg.inference.window);
    if (avail > 0) truth = ds.test.values.middleRows(static_cast<Eigen::Index>(cfg.inference.window),
                                                     static_cast<Eigen::Index>(avail));
  }
  if (window.dim() != n) {
    throw DimensionError("forecast: observations have " + std::to_string(window.dim()) + " columns, the model observes " +
                         std::to_string(n));
  }
  if (std::abs(window.dt - model.dt) > 1e-9 * model.dt) {
    throw InputError("forecast: observation dt " + num(window.dt) + " differs from the model dt " + num(model.dt));
  }
  if (opts.truth) {
    const auto t = io::read_series_csv(*opts.truth, model.dt).series;
    if (t.dim() != n) throw DimensionError("forecast: truth has a different column count");
    truth = t.values.topRows(std::min<Eigen::Index>(t.values.rows(), static_cast<Eigen::Index>(horizon)));
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto inferred = infer_initial_condition(model, window, ic);
  const TimeSeries fc = forecast(model, inferred.final_state, horizon);
  TimeSeries out{fc.values, model.dt, window.start_time + static_cast<double>(window.length()) * model.dt};
  ctx.write(ctx.reports("forecast.csv"), io::series_csv(out));

  io::CsvTable summary{{"quantity", "value"}, {}};
  summary.add_row({"window", std::to_string(window.length())});
  summary.add_row({"horizon", std::to_string(horizon)});
  summary.add_row({"inference_initial_loss", num(inferred.initial_loss)});
  summary.add_row({"inference_final_loss", num(inferred.final_loss)});
  std::string msg = "forecast: window " + std::to_string(window.length()) + " horizon " + std::to_string(horizon) +
                    " inference loss " + short_num(inferred.initial_loss) + " -> " + short_num(inferred.final_loss);
  if (truth && truth->rows() > 0) {
    const Eigen::Index h = truth->rows();
    const double mse = (fc.values.topRows(h) - *truth).squaredNorm() / static_cast<double>(truth->size());
    summary.add_row({"mse", num(mse)});
    summary.add_row({"mse_steps", std::to_string(h)});
    msg += " mse " + short_num(mse) + " over " + std::to_string(h) + " steps";
  }
  ctx.write(ctx.reports("forecast_summary.csv"), summary.str());

  std::vector<io::Series2D> lines;
  const double t_end = out.start_time;
  const std::vector<double> wt = steps(window.length(), window.start_time, model.dt);
  io::Series2D obs{"observed", {}, {}};
  for (std::size_t i = 0; i < window.length(); ++i) {
    if (ic.mask && (*ic.mask)(static_cast<Eigen::Index>(i), 0) == 0.0) continue;
    obs.x.push_back(wt[i]);
    obs.y.push_back(window.values(static_cast<Eigen::Index>(i), 0));
  }
  lines.push_back(obs);
  lines.push_back({"forecast", steps(horizon, t_end, model.dt), column(fc.values, 0)});
  if (truth) lines.push_back({"truth", steps(static_cast<std::size_t>(truth->rows()), t_end, model.dt), column(*truth, 0)});
  ctx.write(ctx.figures("forecast.svg"), io::svg_line_plot({"forecast x1", "t", "x1"}, lines));
  ctx.result(msg + " (" + short_num(seconds_since(t0)) + " s)");
  return 0;
}

// ---------------------------------------------------------------------------

namespace {

struct BenchRow {
  std::string method;
  std::string params;
  std::optional<ForecastReport> report;
  std::optional<double> lyapunov;
  std::string note;
};

std::string cell(const std::optional<double>& v) { return v ? num(*v) : "DIVERGED"; }

void overlay(RunContext& ctx, const Forecaster& f, const TimeSeries& test, const std::string& label) {
  const std::size_t ctxlen = f.context_length();
  const std::size_t len = std::min(ctx.config().evaluation.overlay_length, test.length() - ctxlen);
  if (len == 0) return;
  const Matrix context = test.values.topRows(static_cast<Eigen::Index>(ctxlen));
  const Matrix truth = test.values.middleRows(static_cast<Eigen::Index>(ctxlen), static_cast<Eigen::Index>(len));
  std::vector<io::Series2D> lines{{"truth", steps(len, 0.0, test.dt), column(truth, 0)}};
  try {
    const Matrix pred = f.predict(context, len);
    lines.push_back({label, steps(len, 0.0, test.dt), column(pred, 0)});
  } catch (const DivergedError&) {
    // truth only: the overlay records that the forecast diverged
    lines[0].label = "truth (" + label + " diverged)";
  }
  ctx.write(ctx.figures("overlay_" + method_slug(label) + ".svg"),
            io::svg_line_plot({label + " forecast vs truth", "t - t0", "x1"}, lines));
}

}  // namespace

int cmd_benchmark(RunContext& ctx, bool reuse_models) {
  const auto& cfg = ctx.config();
  const auto& ev = cfg.evaluation;
  const std::size_t max_h = ev.horizons.back();

  // Validate every method's window against the test set before any work.
  std::size_t context = 1;
  if (cfg.baselines.nbeddyn) context = std::max(context, cfg.inference.window);
  for (const auto& a : cfg.baselines.analog) context = std::max(context, (a.dim - 1) * a.tau + 1);
  for (const auto& s : cfg.baselines.sparse) context = std::max(context, (s.dim - 1) * s.tau + 1);
  if (cfg.dataset.test_length < context + max_h) {
    throw ConfigError("dataset.test_length", "is " + std::to_string(cfg.dataset.test_length) +
                                                 ", shorter than the longest context " + std::to_string(context) +
                                                 " + max horizon " + std::to_string(max_h));
  }
  if (!cfg.baselines.nbeddyn && cfg.baselines.analog.empty() && cfg.baselines.sparse.empty()) {
    throw ConfigError("baselines", "no methods selected");
  }

  const Dataset ds = build_dataset(cfg);
  const double dt = ds.train.dt;
  std::vector<BenchRow> rows;
  auto evaluate = [&](const Forecaster& f, BenchRow& row) {
    const auto windows = make_test_windows(ds.test, f.context_length(), max_h, ev.stride);
    auto rep = forecast_rmse(f, windows, ev.horizons);
    rep.method = row.method;
    if (rep.n_sequences > 0) row.report = rep;
    else row.note = "all windows diverged";
    overlay(ctx, f, ds.test, row.method + " " + row.params);
  };
  auto lyapunov_of = [&](auto&& generate, BenchRow& row) {
    if (ev.lyapunov_steps == 0) return;
    try {
      const Matrix gen = generate();
      if (!gen.allFinite()) throw DivergedError("generated series is not finite", 0);
      row.lyapunov = scalar_lyapunov(gen, dt);
    } catch (const Error& e) {
      row.note += (row.note.empty() ? "" : "; ") + std::string("lyapunov: ") + e.what();
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.baselines.nbeddyn) {
    const TrainConfig tc = cfg.train_config();
    for (std::size_t d : cfg.model.latent_dims) {
      BenchRow row{"NbedDyn", "dE=" + std::to_string(d), {}, {}, {}};
      try {
        const fs::path mp = ctx.models(model_file_name(d));
        std::shared_ptr<TrainedModel> model;
        if (reuse_models && fs::exists(mp)) {
          model = std::make_shared<TrainedModel>(io::load_model(mp));
          ctx.log("benchmark: reusing " + mp.string());
        } else {
          ctx.log("benchmark: training NbedDyn " + row.params);
          model = std::make_shared<TrainedModel>(train(ds.train, cfg.architecture(d, ds.train.dim()), tc));
          ctx.write(mp, io::model_document(*model));
        }
        InferenceConfig ic = cfg.inference.inference;
        ic.seed = cfg.seed;
        evaluate(NbedDynForecaster(model, cfg.inference.window, ic), row);
        const Vector x0 = model->train_latents.augmented().bottomRows(1).transpose();
        lyapunov_of([&] { return forecast_states(*model, x0, ev.lyapunov_steps); }, row);
      } catch (const Error& e) {
        row.note = e.what();
      }
      rows.push_back(row);
    }
  }
  const Vector train_x = ds.train.values.col(0);
  for (const auto& a : cfg.baselines.analog) {
    BenchRow row{"AF", "tau=" + std::to_string(a.tau) + " dE=" + std::to_string(a.dim) + " k=" + std::to_string(a.k), {}, {}, {}};
    ctx.log("benchmark: AF " + row.params);
    try {
      const auto emb = delay_embed(train_x, a.tau, a.dim);
      const AnalogForecaster f(build_analog_catalog(emb, a.k, a.regression), a.tau, a.dim);
      evaluate(f, row);
      const Vector q = emb.data.bottomRows(1).transpose();
      lyapunov_of([&] { return analog_forecast(f.catalog(), q, ev.lyapunov_steps); }, row);
    } catch (const Error& e) {
      row.note = e.what();
    }
    rows.push_back(row);
  }
  for (const auto& s : cfg.baselines.sparse) {
    BenchRow row{"SR", "tau=" + std::to_string(s.tau) + " dE=" + std::to_string(s.dim) + " threshold=" + num(s.threshold), {}, {}, {}};
    ctx.log("benchmark: SR " + row.params);
    try {
      const auto emb = delay_embed(train_x, s.tau, s.dim);
      IntegratorConfig integ;
      integ.dt = dt;
      integ.substeps = cfg.model.train.integrator.substeps;
      const SparseForecaster f(sparse_fit(emb, dt, s.threshold), s.tau, s.dim, integ);
      evaluate(f, row);
      const Vector q = emb.data.bottomRows(1).transpose();
      lyapunov_of([&] { return sparse_forecast(f.model(), q, ev.lyapunov_steps, integ); }, row);
    } catch (const Error& e) {
      row.note = e.what();
    }
    rows.push_back(row);
  }

  std::vector<std::string> header{"method", "params"};
  for (std::size_t h : ev.horizons) header.push_back("rmse_h" + std::to_string(h));
  for (const char* c : {"lyapunov", "n_sequences", "n_diverged"}) header.push_back(c);
  io::CsvTable table{header, {}};
  std::vector<std::string> labels;
  std::vector<double> first;
  for (const auto& r : rows) {
    std::vector<std::string> cells{r.method, r.params};
    for (std::size_t k = 0; k < ev.horizons.size(); ++k)
      cells.push_back(r.report ? num(r.report->rmse[k]) : "DIVERGED");
    cells.push_back(cell(r.lyapunov));
    cells.push_back(r.report ? std::to_string(r.report->n_sequences) : "0");
    cells.push_back(r.report ? std::to_string(r.report->n_diverged) : "DIVERGED");
    table.add_row(cells);
    if (r.report) {
      labels.push_back(r.method + " " + r.params);
      first.push_back(r.report->rmse[0]);
    }
    ctx.result("benchmark: " + r.method + " " + r.params + " rmse_h" + std::to_string(ev.horizons[0]) + "=" +
               (r.report ? short_num(r.report->rmse[0]) : "DIVERGED") +
               " lyapunov=" + (r.lyapunov ? short_num(*r.lyapunov) : "DIVERGED") + (r.note.empty() ? "" : " [" + r.note + "]"));
  }
  ctx.write(ctx.reports("benchmark.csv"), table.str());
  if (!labels.empty()) {
    io::PlotSpec spec{"RMSE at t0+" + std::to_string(ev.horizons[0]) + " steps", "method", "rmse", 720, 400, true};
    ctx.write(ctx.figures("benchmark.svg"), io::svg_bar_chart(spec, labels, first));
  }
  ctx.log("benchmark: " + std::to_string(rows.size()) + " rows (" + short_num(seconds_since(t0)) + " s)");
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_lyapunov(RunContext& ctx, const SeriesSource& source) {
  const auto& cfg = ctx.config();
  struct Entry {
    std::string name;
    LyapunovResult result;
    double dt;
  };
  std::vector<Entry> entries;
  auto add = [&](const std::string& name, const Matrix& states, double dt) {
    entries.push_back({name, largest_lyapunov(states, dt), dt});
    if (states.cols() > 1) entries.push_back({name + ":x1", largest_lyapunov(TimeSeries{states.col(0), dt, 0.0}), dt});
  };
  if (source.model) {
    const TrainedModel model = io::load_model(*source.model);
    const Vector x0 = model.train_latents.augmented().bottomRows(1).transpose();
    const Matrix gen = forecast_states(model, x0, cfg.evaluation.lyapunov_steps);
    add("model", gen, model.dt);
  } else if (source.series) {
    const auto s = io::read_series_csv(*source.series, cfg.dataset.dt).series;
    add("series", s.values, s.dt);
  } else {
    const Dataset ds = build_dataset(cfg);
    add("truth", ds.truth.values, ds.truth.dt);
  }
  io::CsvTable t{{"source", "exponent", "theiler", "pairs", "fit_steps"}, {}};
  std::vector<io::Series2D> curves;
  for (const auto& e : entries) {
    t.add_row({e.name, num(e.result.exponent), std::to_string(e.result.theiler), std::to_string(e.result.pairs),
               std::to_string(e.result.fit_steps)});
    curves.push_back({e.name, steps(e.result.divergence.size(), 0.0, e.dt), e.result.divergence});
    ctx.result("lyapunov: " + e.name + " lambda1=" + short_num(e.result.exponent) + " (theiler " +
               std::to_string(e.result.theiler) + ", " + std::to_string(e.result.pairs) + " pairs)");
  }
  ctx.write(ctx.reports("lyapunov.csv"), t.str());
  ctx.write(ctx.figures("divergence.svg"),
            io::svg_line_plot({"mean log divergence", "time", "<ln d>"}, curves));
  return 0;
}

int cmd_spectrum(RunContext& ctx, const std::optional<fs::path>& model_path) {
  const auto& ev = ctx.config().evaluation;
  const TrainedModel model = load_run_model(ctx, model_path);
  const auto rep = jacobian_spectrum(model, ev.spectrum_stride, ev.spectrum_threshold);
  ctx.write(ctx.reports("spectrum.csv"), spectrum_report_csv(rep));
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < rep.mean_modulus.size(); ++r) labels.push_back(std::to_string(r + 1));
  io::PlotSpec spec{"mean eigenvalue modulus by rank", "rank", "|eigenvalue|", 640, 400, true};
  ctx.write(ctx.figures("spectrum.svg"), io::svg_bar_chart(spec, labels, rep.mean_modulus));
  std::string msg = "spectrum: effective dimension " + std::to_string(rep.effective_dimension) + " of " +
                    std::to_string(rep.mean_modulus.size()) + " (threshold " + short_num(rep.threshold) + ", " +
                    std::to_string(rep.state_indices.size()) + " states)";
  if (rep.mean_modulus.size() > 3) msg += " gap(3)=" + short_num(rep.modulus_gap(3));
  ctx.result(msg);
  return 0;
}

int cmd_embed_params(RunContext& ctx) {
  const auto& cfg = ctx.config();
  const Dataset ds = build_dataset(cfg);
  const Vector x = ds.train.values.col(0);
  const auto& b = cfg.baselines;
  const auto mi = lag_by_mutual_information(x, b.max_lag, b.bins);
  const auto ac = lag_by_autocorrelation(x, b.max_lag);
  const auto fnn = embedding_dim_fnn(x, mi.tau, b.max_dim);
  const std::size_t dim = fnn.dim;
  const bool fnn_warning = fnn.warning;
  io::CsvTable t{{"quantity", "value", "warning"}, {}};
  t.add_row({"tau_mi", std::to_string(mi.tau), mi.warning ? "1" : "0"});
  t.add_row({"tau_corr", std::to_string(ac.tau), ac.warning ? "1" : "0"});
  t.add_row({"dE_fnn", std::to_string(dim), fnn_warning ? "1" : "0"});
  ctx.write(ctx.reports("embed_params.csv"), t.str());

  io::CsvTable curves{{"lag", "mutual_information", "autocorrelation"}, {}};
  for (std::size_t k = 0; k < mi.curve.size(); ++k)
    curves.add_row({std::to_string(k + 1), num(mi.curve[k]), k < ac.curve.size() ? num(ac.curve[k]) : ""});
  ctx.write(ctx.reports("lag_curves.csv"), curves.str());
  io::CsvTable f{{"dim", "false_fraction"}, {}};
  for (std::size_t k = 0; k < fnn.fractions.size(); ++k) f.add_row({std::to_string(k + 1), num(fnn.fractions[k])});
  ctx.write(ctx.reports("fnn.csv"), f.str());
  ctx.write(ctx.figures("lag_curves.svg"),
            io::svg_line_plot({"lag statistics", "lag", "value"},
                              {{"mutual information", steps(mi.curve.size(), 1.0, 1.0), mi.curve},
                               {"autocorrelation", steps(ac.curve.size(), 1.0, 1.0), ac.curve}}));
  ctx.result("embed-params: tau_MI=" + std::to_string(mi.tau) + (mi.warning ? " (warning)" : "") +
             " tau_Corr=" + std::to_string(ac.tau) + (ac.warning ? " (warning)" : "") + " dE_FNN=" +
             std::to_string(dim) + (fnn_warning ? " (warning)" : ""));
  return 0;
}

}  // namespace nbed::cli
