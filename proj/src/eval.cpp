#include "nbed/eval.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "nbed/io.hpp"
#include "nbed/kernels.hpp"

namespace nbed {

Matrix PersistenceForecaster::predict(const Matrix& context, std::size_t horizon) const {
  if (context.rows() < 1) throw InputError("persistence: empty context");
  return context.row(context.rows() - 1).replicate(static_cast<Eigen::Index>(horizon), 1);
}

NbedDynForecaster::NbedDynForecaster(std::shared_ptr<const TrainedModel> model, std::size_t window,
                                     InferenceConfig inference)
    : model_(std::move(model)), window_(window), inference_(std::move(inference)) {
  if (!model_) throw InputError("NbedDynForecaster: null model");
  if (window_ < 2) throw InputError("NbedDynForecaster: window must be >= 2");
}

std::string NbedDynForecaster::name() const {
  return "NbedDyn d_E=" + std::to_string(model_->model.architecture().latent_dim);
}

Matrix NbedDynForecaster::predict(const Matrix& context, std::size_t horizon) const {
  TimeSeries obs;
  obs.values = context.bottomRows(static_cast<Eigen::Index>(std::min<std::size_t>(window_, context.rows())));
  obs.dt = model_->dt;
  const InferenceResult inf = infer_initial_condition(*model_, obs, inference_);
  return forecast(*model_, inf.final_state, horizon).values;
}

Vector delay_vector(const Matrix& context, std::size_t tau, std::size_t dim) {
  const auto need = static_cast<Eigen::Index>((dim - 1) * tau + 1);
  if (context.rows() < need)
    throw InputError("delay_vector: context of " + std::to_string(context.rows()) + " rows, need " +
                     std::to_string(need));
  if (context.cols() != 1) throw DimensionError("delay_vector: delay coordinates need a scalar series");
  Vector v(static_cast<Eigen::Index>(dim));
  const Eigen::Index last = context.rows() - 1;
  for (std::size_t k = 0; k < dim; ++k) v(static_cast<Eigen::Index>(k)) = context(last - static_cast<Eigen::Index>(k * tau), 0);
  return v;
}

AnalogForecaster::AnalogForecaster(AnalogCatalog catalog, std::size_t tau, std::size_t dim)
    : catalog_(std::move(catalog)), tau_(tau), dim_(dim) {
  if (static_cast<std::size_t>(catalog_.predecessors.cols()) != dim_)
    throw DimensionError("AnalogForecaster: catalog dimension differs from d_E");
}

std::string AnalogForecaster::name() const {
  return "AF tau=" + std::to_string(tau_) + " d_E=" + std::to_string(dim_);
}

Matrix AnalogForecaster::predict(const Matrix& context, std::size_t horizon) const {
  const Matrix path = analog_forecast(catalog_, delay_vector(context, tau_, dim_), horizon);
  if (!path.allFinite()) throw DivergedError("analog forecast produced non-finite values", 0);
  return path.col(0);
}

SparseForecaster::SparseForecaster(SparseModel model, std::size_t tau, std::size_t dim, IntegratorConfig integrator)
    : model_(std::move(model)), tau_(tau), dim_(dim), integrator_(integrator) {
  if (model_.dim() != dim_) throw DimensionError("SparseForecaster: model dimension differs from d_E");
}

std::string SparseForecaster::name() const {
  return "SR tau=" + std::to_string(tau_) + " d_E=" + std::to_string(dim_);
}

Matrix SparseForecaster::predict(const Matrix& context, std::size_t horizon) const {
  return sparse_forecast(model_, delay_vector(context, tau_, dim_), horizon, integrator_).col(0);
}

// ---------------------------------------------------------------------------
// Forecast evaluation

std::vector<TestWindow> make_test_windows(const TimeSeries& series, std::size_t context, std::size_t max_horizon,
                                          std::size_t stride) {
  if (context < 1 || max_horizon < 1 || stride < 1)
    throw InputError("make_test_windows: context, horizon and stride must be >= 1");
  const std::size_t t = series.length();
  if (t < context + max_horizon)
    throw InputError("make_test_windows: series of " + std::to_string(t) + " samples is shorter than context " +
                     std::to_string(context) + " + horizon " + std::to_string(max_horizon));
  std::vector<TestWindow> out;
  for (std::size_t t0 = context - 1; t0 + max_horizon < t; t0 += stride) {
    TestWindow w;
    w.start = t0;
    w.context = series.values.middleRows(static_cast<Eigen::Index>(t0 + 1 - context), static_cast<Eigen::Index>(context));
    w.future = series.values.middleRows(static_cast<Eigen::Index>(t0 + 1), static_cast<Eigen::Index>(max_horizon));
    out.push_back(std::move(w));
  }
  return out;
}

namespace {

void check_horizons(const std::vector<std::size_t>& horizons) {
  if (horizons.empty()) throw InputError("forecast evaluation: no horizons");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1) throw InputError("forecast evaluation: horizons must be >= 1");
    if (i && horizons[i] <= horizons[i - 1]) throw InputError("forecast evaluation: horizons must increase strictly");
  }
}

// Predictions per window (empty when diverged), computed in parallel.
std::vector<Matrix> run_windows(const Forecaster& f, const std::vector<TestWindow>& windows, std::size_t max_h) {
  for (const auto& w : windows) {
    if (static_cast<std::size_t>(w.future.rows()) < max_h)
      throw InputError("forecast evaluation: window at " + std::to_string(w.start) + " is shorter than horizon " +
                       std::to_string(max_h));
    if (static_cast<std::size_t>(w.context.rows()) < f.context_length())
      throw InputError("forecast evaluation: window at " + std::to_string(w.start) + " has " +
                       std::to_string(w.context.rows()) + " context rows, " + f.name() + " needs " +
                       std::to_string(f.context_length()));
  }
  std::vector<Matrix> preds(windows.size());
  std::exception_ptr failure;
  const auto count = static_cast<long>(windows.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    const auto& w = windows[static_cast<std::size_t>(i)];
    try {
      const Eigen::Index ctx = static_cast<Eigen::Index>(f.context_length());
      Matrix p = f.predict(w.context.bottomRows(ctx), max_h);
      if (p.rows() != static_cast<Eigen::Index>(max_h) || p.cols() != w.future.cols())
        throw DimensionError(f.name() + ": prediction shape mismatch");
      if (p.allFinite()) preds[static_cast<std::size_t>(i)] = std::move(p);
    } catch (const DivergedError&) {
      // left empty: counted as diverged
    } catch (...) {
#pragma omp critical(nbed_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return preds;
}

}  // namespace

std::vector<std::vector<double>> forecast_errors(const Forecaster& forecaster, const std::vector<TestWindow>& windows,
                                                 const std::vector<std::size_t>& horizons) {
  check_horizons(horizons);
  const auto preds = run_windows(forecaster, windows, horizons.back());
  std::vector<std::vector<double>> out(windows.size(), std::vector<double>(horizons.size()));
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      if (preds[w].size() == 0) {
        out[w][h] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto r = static_cast<Eigen::Index>(horizons[h] - 1);
      out[w][h] = (preds[w].row(r) - windows[w].future.row(r)).squaredNorm() / static_cast<double>(preds[w].cols());
    }
  return out;
}

ForecastReport forecast_rmse(const Forecaster& forecaster, const std::vector<TestWindow>& windows,
                             const std::vector<std::size_t>& horizons) {
  check_horizons(horizons);
  if (windows.empty()) throw InputError("forecast_rmse: no test windows");
  const auto preds = run_windows(forecaster, windows, horizons.back());

  ForecastReport rep;
  rep.method = forecaster.name();
  rep.horizons = horizons;
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    const auto r = static_cast<Eigen::Index>(horizons[h] - 1);
    double se = 0.0, sp = 0.0, st = 0.0, spp = 0.0, stt = 0.0, spt = 0.0;
    double n = 0.0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      if (preds[w].size() == 0) continue;
      for (Eigen::Index c = 0; c < preds[w].cols(); ++c) {
        const double p = preds[w](r, c), t = windows[w].future(r, c);
        se += (p - t) * (p - t);
        sp += p;
        st += t;
        spp += p * p;
        stt += t * t;
        spt += p * t;
        n += 1.0;
      }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (n == 0.0) {
      rep.rmse.push_back(nan);
      rep.correlation.push_back(nan);
      continue;
    }
    rep.rmse.push_back(std::sqrt(se / n));
    const double cov = spt - sp * st / n;
    const double vp = spp - sp * sp / n, vt = stt - st * st / n;
    double corr = nan;
    if (se == 0.0)
      corr = 1.0;
    else if (vp > 0.0 && vt > 0.0)
      corr = std::clamp(cov / std::sqrt(vp * vt), -1.0, 1.0);
    rep.correlation.push_back(corr);
  }
  for (const auto& p : preds) (p.size() == 0 ? rep.n_diverged : rep.n_sequences)++;
  return rep;
}

double ForecastReport::rmse_at(std::size_t horizon) const {
  for (std::size_t i = 0; i < horizons.size(); ++i)
    if (horizons[i] == horizon) return rmse[i];
  throw InputError("ForecastReport: horizon " + std::to_string(horizon) + " not evaluated");
}

double ForecastReport::divergence_rate() const {
  const std::size_t total = n_sequences + n_diverged;
  return total ? static_cast<double>(n_diverged) / static_cast<double>(total) : 0.0;
}

std::string forecast_report_csv(const ForecastReport& r) {
  io::CsvTable t{{"horizon", "rmse", "correlation", "n_sequences", "n_diverged"}, {}};
  for (std::size_t i = 0; i < r.horizons.size(); ++i)
    t.add_row({std::to_string(r.horizons[i]), io::format_double(r.rmse[i]), io::format_double(r.correlation[i]),
               std::to_string(r.n_sequences), std::to_string(r.n_diverged)});
  return t.str();
}

// ---------------------------------------------------------------------------
// Lyapunov exponent

double mean_period(const Matrix& states) {
  const Eigen::Index n = states.rows();
  if (n < 4) throw InputError("mean_period: series too short");
  std::vector<double> x(static_cast<std::size_t>(n));
  const double mean = states.col(0).mean();
  for (Eigen::Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = states(i, 0) - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  std::size_t peak = 0;
  double best = -1.0;
  for (std::size_t k = 1; k <= static_cast<std::size_t>(n) / 2; ++k) {
    const double p = std::norm(spec[k]);
    if (p > best) {
      best = p;
      peak = k;
    }
  }
  if (peak == 0 || best <= 0.0) throw InputError("mean_period: flat spectrum");
  return static_cast<double>(n) / static_cast<double>(peak);
}

std::vector<double> divergence_curve(const Matrix& points, std::size_t theiler, std::size_t steps,
                                     std::size_t* pairs) {
  const auto m = static_cast<std::size_t>(points.rows());
  if (m <= steps + 1) throw InputError("divergence_curve: series too short for " + std::to_string(steps) + " steps");
  const std::size_t base = m - steps;  // reference points with a full-length future
  const Matrix head = points.topRows(static_cast<Eigen::Index>(base));
  const auto nearest = kernels::all_nearest_parallel(head, theiler);

  std::vector<double> sum(steps + 1, 0.0);
  std::vector<std::size_t> count(steps + 1, 0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < base; ++i) {
    const std::size_t j = nearest[i].index;
    if (j == kernels::npos) continue;
    ++used;
    for (std::size_t k = 0; k <= steps; ++k) {
      const double d = (points.row(static_cast<Eigen::Index>(i + k)) - points.row(static_cast<Eigen::Index>(j + k))).norm();
      if (d > 0.0) {
        sum[k] += std::log(d);
        ++count[k];
      }
    }
  }
  if (used == 0) throw InputError("divergence_curve: no neighbour pairs outside the Theiler window");
  std::vector<double> curve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    curve[k] = count[k] ? sum[k] / static_cast<double>(count[k]) : std::numeric_limits<double>::quiet_NaN();
  if (pairs) *pairs = used;
  return curve;
}

LyapunovResult largest_lyapunov(const Matrix& states, double dt, const LyapunovParams& params) {
  if (!(dt > 0.0)) throw InputError("largest_lyapunov: dt must be > 0");
  if (!(params.fit_fraction > 0.0 && params.fit_fraction <= 1.0))
    throw InputError("largest_lyapunov: fit_fraction must be in (0, 1]");
  const auto steps = static_cast<std::size_t>(std::lround(params.curve_time / dt));
  if (!(params.curve_time > 0.0) || steps < 2) throw InputError("largest_lyapunov: curve_time must span >= 2 samples");
  if (!states.allFinite()) throw InputError("largest_lyapunov: non-finite samples");

  Matrix points = states;
  if (states.cols() == 1) {
    const Vector x = states.col(0);
    std::size_t tau = params.embed_tau;
    if (tau == 0) {
      const std::size_t max_lag = std::min<std::size_t>(200, static_cast<std::size_t>(x.size()) / 2 - 1);
      tau = lag_by_mutual_information(x, max_lag).tau;
    }
    points = delay_embed(x, tau, params.embed_dim).data;
  }

  LyapunovResult res;
  res.theiler = params.theiler;
  if (res.theiler == 0) {
    // A spectral peak near the record length is not a usable period; keep pairs available.
    const std::size_t usable = points.rows() > static_cast<Eigen::Index>(steps) ? static_cast<std::size_t>(points.rows()) - steps : 0;
    res.theiler = std::min(static_cast<std::size_t>(std::lround(mean_period(states))), std::max<std::size_t>(1, usable / 4));
  }
  res.divergence = divergence_curve(points, res.theiler, steps, &res.pairs);
  res.fit_steps = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(params.fit_fraction * static_cast<double>(res.divergence.size()))));

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, n = 0.0;
  for (std::size_t k = 0; k < res.fit_steps; ++k) {
    const double y = res.divergence[k];
    if (!std::isfinite(y)) continue;
    const double t = static_cast<double>(k) * dt;
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    n += 1.0;
  }
  if (n < 2.0) throw InputError("largest_lyapunov: too few finite points in the fit range");
  res.exponent = (sxy - sx * sy / n) / (sxx - sx * sx / n);
  return res;
}

LyapunovResult largest_lyapunov(const TimeSeries& series, const LyapunovParams& params) {
  series.validate();
  return largest_lyapunov(series.values, series.dt, params);
}

// ---------------------------------------------------------------------------
// Jacobian spectrum

double SpectrumReport::modulus_gap(std::size_t k) const {
  if (k == 0 || k > mean_modulus.size()) throw InputError("modulus_gap: rank out of range");
  const double top = *std::min_element(mean_modulus.begin(), mean_modulus.begin() + static_cast<long>(k));
  if (k == mean_modulus.size()) return std::numeric_limits<double>::infinity();
  const double rest = *std::max_element(mean_modulus.begin() + static_cast<long>(k), mean_modulus.end());
  return rest > 0.0 ? top / rest : std::numeric_limits<double>::infinity();
}

SpectrumReport jacobian_spectrum(const VectorField& field, const Matrix& states, std::size_t stride,
                                 double threshold) {
  if (stride < 1) throw InputError("jacobian_spectrum: stride must be >= 1");
  if (!(threshold >= 0.0)) throw InputError("jacobian_spectrum: threshold must be >= 0");
  const std::size_t d = field.dim();
  if (static_cast<std::size_t>(states.cols()) != d)
    throw DimensionError("jacobian_spectrum: states have " + std::to_string(states.cols()) + " columns, field " +
                         std::to_string(d));
  if (states.rows() == 0) throw InputError("jacobian_spectrum: no states");

  SpectrumReport rep;
  rep.threshold = threshold;
  rep.mean_modulus.assign(d, 0.0);
  rep.max_modulus.assign(d, 0.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(states.rows()); i += stride) {
    const Vector x = states.row(static_cast<Eigen::Index>(i)).transpose();
    const Matrix jac = jacobian_at(field, x);
    Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(jac), false);
    if (es.info() != Eigen::Success || !jac.allFinite())
      throw Error("jacobian_spectrum: eigen-decomposition failed at state " + std::to_string(i));
    std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
    std::stable_sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
      if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
      if (a.real() != b.real()) return a.real() > b.real();
      return a.imag() > b.imag();
    });
    for (std::size_t r = 0; r < d; ++r) {
      rep.mean_modulus[r] += std::abs(ev[r]);
      rep.max_modulus[r] = std::max(rep.max_modulus[r], std::abs(ev[r]));
    }
    rep.state_indices.push_back(i);
    rep.eigenvalues.push_back(std::move(ev));
  }
  const double count = static_cast<double>(rep.state_indices.size());
  for (auto& m : rep.mean_modulus) m /= count;
  const double top = *std::max_element(rep.mean_modulus.begin(), rep.mean_modulus.end());
  rep.effective_dimension = static_cast<std::size_t>(
      std::count_if(rep.mean_modulus.begin(), rep.mean_modulus.end(), [&](double m) { return m > threshold * top; }));
  return rep;
}

SpectrumReport jacobian_spectrum(const TrainedModel& trained, std::size_t stride, double threshold) {
  if (trained.train_latents.length() == 0) throw InputError("jacobian_spectrum: model has no stored latent trajectory");
  return jacobian_spectrum(trained.model, trained.train_latents.augmented(), stride, threshold);
}

std::string spectrum_report_csv(const SpectrumReport& r) {
  io::CsvTable t{{"rank", "mean_modulus", "max_modulus", "active"}, {}};
  const double top = r.mean_modulus.empty() ? 0.0 : *std::max_element(r.mean_modulus.begin(), r.mean_modulus.end());
  for (std::size_t k = 0; k < r.mean_modulus.size(); ++k)
    t.add_row({std::to_string(k + 1), io::format_double(r.mean_modulus[k]), io::format_double(r.max_modulus[k]),
               r.mean_modulus[k] > r.threshold * top ? "1" : "0"});
  return t.str();
}

}  // namespace nbed
