#include <doctest.h>

#include <cmath>
#include <random>

#include "nbed/eval.hpp"

using namespace nbed;

namespace {

const Matrix& lorenz_states() {
  static const Matrix states = [] {
    Vector z0(3);
    z0 << 1.0, 1.0, 1.0;
    return Matrix(simulate_lorenz63(z0, 0.01, 14000).values.bottomRows(13000));
  }();
  return states;
}

TimeSeries lorenz_x1(std::size_t first, std::size_t count) {
  TimeSeries s;
  s.values = lorenz_states().col(0).segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  s.dt = 0.01;
  return s;
}

// Knows the whole series and looks the context up by position of its last row.
class Oracle final : public Forecaster {
 public:
  explicit Oracle(Matrix series) : series_(std::move(series)) {}
  std::string name() const override { return "oracle"; }
  std::size_t context_length() const override { return 1; }
  Matrix predict(const Matrix& context, std::size_t horizon) const override {
    for (Eigen::Index t = 0; t < series_.rows(); ++t)
      if (series_.row(t) == context.row(context.rows() - 1))
        return series_.middleRows(t + 1, static_cast<Eigen::Index>(horizon));
    throw InputError("oracle: context not found");
  }

 private:
  Matrix series_;
};

// Diverges on every window whose last context value is negative.
class Fragile final : public Forecaster {
 public:
  std::string name() const override { return "fragile"; }
  std::size_t context_length() const override { return 1; }
  Matrix predict(const Matrix& context, std::size_t horizon) const override {
    if (context(context.rows() - 1, 0) < 0.0) throw DivergedError("fragile", 0);
    return context.row(context.rows() - 1).replicate(static_cast<Eigen::Index>(horizon), 1);
  }
};

}  // namespace

TEST_CASE("make_test_windows: layout and validation") {
  const TimeSeries s = lorenz_x1(0, 100);
  const auto w = make_test_windows(s, 10, 4, 20);
  REQUIRE(w.size() == 5);  // t0 = 9, 29, 49, 69, 89 (89 + 4 < 100)
  CHECK(w[0].start == 9);
  CHECK(w[0].context.rows() == 10);
  CHECK(w[0].context(9, 0) == s.values(9, 0));
  CHECK(w[0].future(0, 0) == s.values(10, 0));
  CHECK(w[4].future(3, 0) == s.values(93, 0));
  CHECK_THROWS_AS(make_test_windows(s, 90, 20, 1), InputError);
  CHECK_THROWS_AS(make_test_windows(s, 10, 0, 1), InputError);
}

TEST_CASE("forecast_rmse: a perfect oracle has zero error and unit correlation") {
  const TimeSeries s = lorenz_x1(0, 2000);
  const Oracle oracle(s.values);
  const auto rep = forecast_rmse(oracle, make_test_windows(s, 1, 16, 37), {1, 4, 16});
  for (std::size_t h = 0; h < 3; ++h) {
    CHECK(rep.rmse[h] == 0.0);
    CHECK(rep.correlation[h] == 1.0);
  }
  CHECK(rep.n_diverged == 0);
  CHECK(rep.n_sequences > 0);
}

TEST_CASE("forecast_rmse: persistence error equals the RMS of h-step increments") {
  const TimeSeries s = lorenz_x1(0, 5000);
  const auto windows = make_test_windows(s, 1, 4, 7);
  const auto rep = forecast_rmse(PersistenceForecaster{}, windows, {1, 4});
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t h = rep.horizons[k];
    double acc = 0.0;
    for (const auto& w : windows) {
      const double inc = s.values(static_cast<Eigen::Index>(w.start + h), 0) - s.values(static_cast<Eigen::Index>(w.start), 0);
      acc += inc * inc;
    }
    CHECK(rep.rmse[k] == doctest::Approx(std::sqrt(acc / static_cast<double>(windows.size()))).epsilon(1e-12));
  }
  CHECK(rep.rmse[0] < rep.rmse[1]);
  CHECK(rep.correlation[0] > 0.99);
}

TEST_CASE("forecast_rmse: diverged windows are excluded and counted") {
  const TimeSeries s = lorenz_x1(0, 3000);
  const auto windows = make_test_windows(s, 1, 2, 11);
  std::size_t negative = 0;
  double acc = 0.0;
  for (const auto& w : windows) {
    if (w.context(0, 0) < 0.0) {
      ++negative;
      continue;
    }
    acc += std::pow(w.future(1, 0) - w.context(0, 0), 2);
  }
  REQUIRE(negative > 0);
  const auto rep = forecast_rmse(Fragile{}, windows, {2});
  CHECK(rep.n_diverged == negative);
  CHECK(rep.n_sequences == windows.size() - negative);
  CHECK(rep.rmse[0] == doctest::Approx(std::sqrt(acc / static_cast<double>(rep.n_sequences))).epsilon(1e-12));
  CHECK(rep.divergence_rate() == doctest::Approx(static_cast<double>(negative) / windows.size()));
}

TEST_CASE("forecast_rmse: rejects bad horizons and short windows") {
  const TimeSeries s = lorenz_x1(0, 200);
  const auto windows = make_test_windows(s, 1, 4, 10);
  PersistenceForecaster p;
  CHECK_THROWS_AS(forecast_rmse(p, windows, {}), InputError);
  CHECK_THROWS_AS(forecast_rmse(p, windows, {4, 1}), InputError);
  CHECK_THROWS_AS(forecast_rmse(p, windows, {8}), InputError);
  CHECK_THROWS_AS(forecast_rmse(p, {}, {1}), InputError);
}

TEST_CASE("forecast_rmse: analog forecaster windows reproduce direct catalog queries") {
  const TimeSeries train = lorenz_x1(0, 10000);
  const TimeSeries test = lorenz_x1(10000, 600);
  const DelayEmbedding e = delay_embed(train, 10, 3);
  const AnalogForecaster af(build_analog_catalog(e, 40, AnalogRegression::locally_linear), 10, 3);
  CHECK(af.context_length() == 21);
  const auto windows = make_test_windows(test, af.context_length(), 4, 50);
  const auto rep = forecast_rmse(af, windows, {1, 4});
  double acc = 0.0;
  for (const auto& w : windows) {
    const Vector q = delay_vector(w.context, 10, 3);
    acc += std::pow(analog_forecast(af.catalog(), q, 1)(0, 0) - w.future(0, 0), 2);
  }
  CHECK(rep.rmse[0] == doctest::Approx(std::sqrt(acc / static_cast<double>(windows.size()))).epsilon(1e-12));
  CHECK(rep.rmse[1] > rep.rmse[0]);
}

TEST_CASE("forecast_rmse is deterministic and the CSV lists one row per horizon") {
  const TimeSeries s = lorenz_x1(0, 3000);
  const auto windows = make_test_windows(s, 1, 8, 13);
  const auto a = forecast_report_csv(forecast_rmse(PersistenceForecaster{}, windows, {1, 2, 8}));
  const auto b = forecast_report_csv(forecast_rmse(PersistenceForecaster{}, windows, {1, 2, 8}));
  CHECK(a == b);
  CHECK(a.rfind("horizon,rmse,correlation,n_sequences,n_diverged\n1,", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 4);
}

TEST_CASE("forecast RMSE grows with horizon in nearly all bootstrap resamples") {
  const TimeSeries s = lorenz_x1(0, 13000);
  const std::vector<std::size_t> horizons{1, 2, 4, 8, 16, 32};
  const auto errs = forecast_errors(PersistenceForecaster{}, make_test_windows(s, 1, 32, 29), horizons);
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, errs.size() - 1);
  int monotone = 0;
  const int resamples = 200;
  for (int b = 0; b < resamples; ++b) {
    std::vector<double> acc(horizons.size(), 0.0);
    for (std::size_t i = 0; i < errs.size(); ++i) {
      const auto& e = errs[pick(rng)];
      for (std::size_t h = 0; h < horizons.size(); ++h) acc[h] += e[h];
    }
    monotone += std::is_sorted(acc.begin(), acc.end());
  }
  CHECK(monotone >= 0.9 * resamples);
}

TEST_CASE("mean_period: sine period recovered from the spectral peak") {
  Matrix s(4000, 1);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, 0) = std::sin(2.0 * M_PI * static_cast<double>(i) / 80.0);
  CHECK(mean_period(s) == doctest::Approx(80.0));
}

TEST_CASE("largest_lyapunov: true Lorenz trajectory") {
  const Matrix states = lorenz_states().topRows(10000);
  const auto r = largest_lyapunov(states, 0.01);
  CHECK(r.exponent >= 0.76);
  CHECK(r.exponent <= 1.06);
  CHECK(r.pairs > 1000);
}

TEST_CASE("largest_lyapunov: periodic signal has no exponential divergence") {
  Matrix s(10000, 1);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, 0) = std::sin(2.0 * M_PI * 0.01 * static_cast<double>(i) / 1.2345);
  CHECK(std::abs(largest_lyapunov(s, 0.01).exponent) < 0.05);
}

TEST_CASE("largest_lyapunov: exponential separation has unit slope") {
  // x(t) = e^t: any two samples separate exactly as e^{k dt}.
  Matrix s(3000, 1);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, 0) = std::exp(0.01 * static_cast<double>(i));
  LyapunovParams p;
  p.embed_tau = 1;
  p.embed_dim = 1;
  p.theiler = 10;
  p.curve_time = 5.0;
  p.fit_fraction = 1.0;
  CHECK(largest_lyapunov(s, 0.01, p).exponent == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("largest_lyapunov: invariant under affine rescaling") {
  const Matrix x = lorenz_states().col(0).head(8000);
  const Matrix y = (x * -4.0).array() + 30.0;
  LyapunovParams p;
  p.embed_tau = 16;
  const double a = largest_lyapunov(x, 0.01, p).exponent;
  const double b = largest_lyapunov(y, 0.01, p).exponent;
  CHECK(a == doctest::Approx(b).epsilon(1e-6));
}

TEST_CASE("largest_lyapunov: input validation") {
  CHECK_THROWS_AS(largest_lyapunov(Matrix(Matrix::Random(100, 3)), 0.01), InputError);
  CHECK_THROWS_AS(largest_lyapunov(Matrix(Matrix::Random(3000, 3)), 0.0), InputError);
  LyapunovParams p;
  p.theiler = 5000;
  p.curve_time = 1.0;
  CHECK_THROWS_AS(largest_lyapunov(Matrix(Matrix::Random(3000, 3)), 0.01, p), InputError);
}

TEST_CASE("jacobian_spectrum: a linear field has the same spectrum everywhere") {
  Matrix a(3, 3);
  a << -1.0, 2.0, 0.0, -2.0, -1.0, 0.0, 0.0, 0.0, -0.5;
  const LinearField f(a);
  const auto rep = jacobian_spectrum(f, Matrix(Matrix::Random(50, 3)), 3);
  REQUIRE(rep.eigenvalues.size() == 17);
  const double expect[] = {std::sqrt(5.0), std::sqrt(5.0), 0.5};
  double worst = 0.0;
  for (const auto& ev : rep.eigenvalues) {
    REQUIRE(ev.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) worst = std::max(worst, std::abs(std::abs(ev[r]) - expect[r]));
    worst = std::max(worst, std::abs(ev[0] - rep.eigenvalues[0][0]));
  }
  CHECK(worst <= 1e-10);
  CHECK(rep.effective_dimension == 3);
  CHECK(rep.max_modulus[2] == doctest::Approx(0.5));
}

TEST_CASE("jacobian_spectrum: effective dimension of a graded diagonal field") {
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 1.0, 0.5, 1e-9;
  const auto rep = jacobian_spectrum(LinearField(d), Matrix(Matrix::Random(10, 3)), 1, 1e-3);
  CHECK(rep.effective_dimension == 2);
  CHECK(rep.modulus_gap(2) == doctest::Approx(0.5e9));
  const std::string csv = spectrum_report_csv(rep);
  CHECK(csv.rfind("rank,mean_modulus,max_modulus,active\n1,1,1,1\n2,0.5,0.5,1\n3,", 0) == 0);
  CHECK(csv.substr(csv.size() - 3) == ",0\n");
}

TEST_CASE("jacobian_spectrum: validation") {
  const LinearField f(Matrix::Identity(2, 2));
  CHECK_THROWS_AS(jacobian_spectrum(f, Matrix::Zero(4, 3), 1), DimensionError);
  CHECK_THROWS_AS(jacobian_spectrum(f, Matrix::Zero(4, 2), 0), InputError);
  CHECK_THROWS_AS(jacobian_spectrum(f, Matrix::Zero(0, 2), 1), InputError);
}
