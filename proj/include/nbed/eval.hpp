#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "nbed/baselines.hpp"
#include "nbed/dynamics.hpp"
#include "nbed/nbeddyn.hpp"
#include "nbed/types.hpp"

namespace nbed {

/// Produces forecasts of the observed variables from a conditioning context.
/// Implementations must be safe to call concurrently.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::string name() const = 0;
  /// Number of samples (ending at t0) the forecaster conditions on.
  virtual std::size_t context_length() const = 0;
  /// `context` holds samples t0 - L + 1 .. t0 (L = context_length()); returns
  /// `horizon` rows for t0 + 1 .. t0 + horizon. Throws DivergedError on blow-up.
  virtual Matrix predict(const Matrix& context, std::size_t horizon) const = 0;
};

/// Repeats the last observed sample.
class PersistenceForecaster final : public Forecaster {
 public:
  std::string name() const override { return "persistence"; }
  std::size_t context_length() const override { return 1; }
  Matrix predict(const Matrix& context, std::size_t horizon) const override;
};

/// Infers the latent state over the context window, then integrates the field.
class NbedDynForecaster final : public Forecaster {
 public:
  NbedDynForecaster(std::shared_ptr<const TrainedModel> model, std::size_t window, InferenceConfig inference);
  std::string name() const override;
  std::size_t context_length() const override { return window_; }
  Matrix predict(const Matrix& context, std::size_t horizon) const override;

 private:
  std::shared_ptr<const TrainedModel> model_;
  std::size_t window_;
  InferenceConfig inference_;
};

/// Analog forecasting on delay coordinates of a scalar series.
class AnalogForecaster final : public Forecaster {
 public:
  AnalogForecaster(AnalogCatalog catalog, std::size_t tau, std::size_t dim);
  std::string name() const override;
  std::size_t context_length() const override { return (dim_ - 1) * tau_ + 1; }
  Matrix predict(const Matrix& context, std::size_t horizon) const override;
  const AnalogCatalog& catalog() const { return catalog_; }

 private:
  AnalogCatalog catalog_;
  std::size_t tau_, dim_;
};

/// Sparse polynomial ODE on delay coordinates of a scalar series.
class SparseForecaster final : public Forecaster {
 public:
  SparseForecaster(SparseModel model, std::size_t tau, std::size_t dim, IntegratorConfig integrator);
  std::string name() const override;
  std::size_t context_length() const override { return (dim_ - 1) * tau_ + 1; }
  Matrix predict(const Matrix& context, std::size_t horizon) const override;
  const SparseModel& model() const { return model_; }

 private:
  SparseModel model_;
  std::size_t tau_, dim_;
  IntegratorConfig integrator_;
};

/// Delay vector [x_t0, x_{t0-tau}, ...] from the tail of a scalar context.
Vector delay_vector(const Matrix& context, std::size_t tau, std::size_t dim);

struct TestWindow {
  std::size_t start = 0;  // index of t0 in the source series
  Matrix context;         // rows up to and including t0
  Matrix future;          // rows t0 + 1 .. t0 + max_horizon
};

/// Windows with t0 = context - 1, context - 1 + stride, ... that fit the series.
std::vector<TestWindow> make_test_windows(const TimeSeries& series, std::size_t context, std::size_t max_horizon,
                                          std::size_t stride);

struct ForecastReport {
  std::string method;
  std::vector<std::size_t> horizons;  // strictly increasing
  std::vector<double> rmse;
  std::vector<double> correlation;
  std::size_t n_sequences = 0;  // windows contributing to the statistics
  std::size_t n_diverged = 0;   // windows excluded because the forecast diverged

  double rmse_at(std::size_t horizon) const;
  double divergence_rate() const;
};

ForecastReport forecast_rmse(const Forecaster& forecaster, const std::vector<TestWindow>& windows,
                             const std::vector<std::size_t>& horizons);

/// Per-window squared errors, exposed for resampling statistics: entry
/// [w][h] is the mean squared error of window w at horizons[h] (NaN if diverged).
std::vector<std::vector<double>> forecast_errors(const Forecaster& forecaster, const std::vector<TestWindow>& windows,
                                                 const std::vector<std::size_t>& horizons);

std::string forecast_report_csv(const ForecastReport& report);

// ---------------------------------------------------------------------------
// Largest Lyapunov exponent (Rosenstein)

struct LyapunovParams {
  std::size_t embed_tau = 0;   // scalar input only; 0 = first MI minimum
  std::size_t embed_dim = 3;   // scalar input only
  std::size_t theiler = 0;     // 0 = mean period from the FFT peak
  double curve_time = 15.0;   // length of the divergence curve, in time units
  double fit_fraction = 0.2;  // leading fraction of the divergence curve used in the fit
};

struct LyapunovResult {
  double exponent = 0.0;  // per time unit
  std::size_t theiler = 0;
  std::size_t pairs = 0;
  std::size_t fit_steps = 0;
  std::vector<double> divergence;  // mean log distance per step
};

/// Dominant period (in samples) of the first column from the FFT power peak.
double mean_period(const Matrix& states);

/// Mean log divergence of nearest-neighbour pairs as a function of step.
std::vector<double> divergence_curve(const Matrix& points, std::size_t theiler, std::size_t steps,
                                     std::size_t* pairs = nullptr);

LyapunovResult largest_lyapunov(const Matrix& states, double dt, const LyapunovParams& params = {});
LyapunovResult largest_lyapunov(const TimeSeries& series, const LyapunovParams& params = {});

// ---------------------------------------------------------------------------
// Jacobian spectrum

struct SpectrumReport {
  std::vector<std::size_t> state_indices;
  std::vector<std::vector<std::complex<double>>> eigenvalues;  // per state, sorted by modulus (desc)
  std::vector<double> mean_modulus;                           // per rank
  std::vector<double> max_modulus;
  double threshold = 1e-2;
  std::size_t effective_dimension = 0;

  /// Ratio of the smallest of the top-k mean moduli to the largest of the rest.
  double modulus_gap(std::size_t k) const;
};

SpectrumReport jacobian_spectrum(const VectorField& field, const Matrix& states, std::size_t stride,
                                 double threshold = 1e-2);
SpectrumReport jacobian_spectrum(const TrainedModel& trained, std::size_t stride, double threshold = 1e-2);

std::string spectrum_report_csv(const SpectrumReport& report);

}  // namespace nbed
