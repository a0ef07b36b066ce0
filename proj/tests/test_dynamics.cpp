#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "nbed/dynamics.hpp"

using namespace nbed;

namespace {

Vector vec3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_CASE("simulate_lorenz63: the z axis is invariant") {
  const auto s = simulate_lorenz63(vec3(0, 0, 5), 0.01, 500);
  CHECK(s.values.leftCols(2).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index k = 1; k < s.values.rows(); ++k) CHECK(s.values(k, 2) < s.values(k - 1, 2));
  CHECK(s.values(500, 2) == doctest::Approx(5.0 * std::exp(-8.0 / 3.0 * 5.0)).epsilon(1e-6));
}

TEST_CASE("simulate_lorenz63: agrees with a 100-substep reference") {
  const auto coarse = simulate_lorenz63(vec3(1, 1, 1), 0.01, 100);
  const auto fine = simulate_lorenz63(vec3(1, 1, 1), 0.01, 100, {}, 100);
  CHECK((coarse.values - fine.values).cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(coarse.values.rows() == 101);
  CHECK(coarse.values.row(0) == vec3(1, 1, 1).transpose());
}

TEST_CASE("simulate_lorenz63: bounded on the attractor") {
  const auto s = simulate_lorenz63(vec3(1, 1, 1), 0.01, 100000);
  CHECK(s.values.cwiseAbs().maxCoeff() < 60.0);
  CHECK(s.dt == 0.01);
}

TEST_CASE("simulate_lorenz63: parameters and validation") {
  LorenzParams p;
  p.rho = 0.5;  // below the pitchfork: everything decays to the origin
  const auto s = simulate_lorenz63(vec3(1, 1, 1), 0.01, 3000, p);
  CHECK(s.values.row(3000).norm() < 1e-3);
  CHECK_THROWS_AS(simulate_lorenz63(vec3(1, 1, 1), 0.0, 10), InputError);
  CHECK_THROWS_AS(simulate_lorenz63(Vector::Ones(2), 0.01, 10), DimensionError);
}

TEST_CASE("simulate_linear_complex: closed form") {
  const std::complex<double> alpha(-0.1, -0.5);
  const auto s = simulate_linear_complex(alpha, 0.5, 0.1, 20);
  CHECK(s.values(10, 0) == doctest::Approx(0.39700).epsilon(1e-4));
  CHECK(s.values(10, 1) == doctest::Approx(-0.21685).epsilon(1e-4));
  const std::complex<double> z = 0.5 * std::exp(alpha * 1.0);
  CHECK(std::abs(s.values(10, 0) - z.real()) < 1e-15);
  CHECK(std::abs(s.values(10, 1) - z.imag()) < 1e-15);
}

TEST_CASE("simulate_linear_complex: zero rate is constant, decay is monotone in modulus") {
  const auto c = simulate_linear_complex(0.0, {0.5, 0.25}, 0.1, 50);
  CHECK((c.values.col(0).array() == 0.5).all());
  CHECK((c.values.col(1).array() == 0.25).all());
  const auto s = simulate_linear_complex({-0.1, -0.5}, 0.5, 0.1, 1000);
  const Vector mod = s.values.rowwise().norm();
  for (Eigen::Index k = 1; k < mod.size(); ++k) CHECK(mod(k) < mod(k - 1));
}

TEST_CASE("simulate_linear_complex: group property") {
  const std::complex<double> alpha(-0.1, -0.5);
  const auto a = simulate_linear_complex(alpha, 0.5, 0.1, 40);
  const std::complex<double> mid(a.values(15, 0), a.values(15, 1));
  const auto b = simulate_linear_complex(alpha, mid, 0.1, 25);
  CHECK((a.values.bottomRows(26) - b.values).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("observe: selection, real part and projection") {
  const auto s = simulate_lorenz63(vec3(1, 1, 1), 0.01, 200);
  const auto ident = observe(s, ObservationOperator::select({0, 1, 2}));
  CHECK(ident.values == s.values);
  CHECK(observe(ident, ObservationOperator::select({0, 1, 2})).values == ident.values);
  const auto x1 = observe(s, ObservationOperator::select({0}));
  CHECK(x1.values.cols() == 1);
  CHECK(x1.values.col(0) == s.values.col(0));
  CHECK(x1.dt == s.dt);

  const auto c = simulate_linear_complex({-0.1, -0.5}, 0.5, 0.1, 30);
  CHECK(observe(c, ObservationOperator::real_part()).values.col(0) == c.values.col(0));

  Matrix p(1, 3);
  p << 1.0, -1.0, 0.5;
  const auto y = observe(s, ObservationOperator::projection(p));
  CHECK((y.values - s.values * p.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(observe(s, ObservationOperator::select({3})), DimensionError);
  CHECK_THROWS_AS(observe(s, ObservationOperator::real_part()), DimensionError);
  CHECK_THROWS_AS(observe(s, ObservationOperator::projection(Matrix::Ones(1, 2))), DimensionError);
}

TEST_CASE("add_observation_noise: zero, statistics and determinism") {
  TimeSeries s;
  s.values = Matrix::Zero(100000, 1);
  s.dt = 0.01;
  CHECK(add_observation_noise(s, 0.0, 1).values == s.values);
  const auto a = add_observation_noise(s, 1.0, 42);
  const auto b = add_observation_noise(s, 1.0, 42);
  CHECK(a.values == b.values);
  CHECK(a.values != add_observation_noise(s, 1.0, 43).values);
  const double mean = a.values.mean();
  const double sd = std::sqrt((a.values.array() - mean).square().sum() / (a.values.size() - 1));
  CHECK(sd >= 0.99);
  CHECK(sd <= 1.01);
  CHECK_THROWS_AS(add_observation_noise(s, -1.0, 1), InputError);
}

TEST_CASE("pca: exact low-rank data is reconstructed") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix w(300, 2), p(2, 8);
  for (auto& v : w.reshaped()) v = g(rng);
  for (auto& v : p.reshaped()) v = g(rng);
  const Matrix data = (w * p).rowwise() + Vector::LinSpaced(8, 1, 8).transpose();
  const auto pca = pca_fit(data, 2);
  CHECK((pca.inverse(pca.transform(data)) - data).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(pca.explained_total() == doctest::Approx(1.0).epsilon(1e-10));
  const Matrix gram = pca.components * pca.components.transpose();
  CHECK((gram - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("pca: isotropic cloud spreads variance evenly") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  Matrix data(200000, 4);
  for (auto& v : data.reshaped()) v = g(rng);
  const auto pca = pca_fit(data, 4);
  for (double e : pca.explained) CHECK(e == doctest::Approx(0.25).epsilon(0.04));
  for (std::size_t i = 1; i < pca.explained.size(); ++i) CHECK(pca.explained[i] <= pca.explained[i - 1]);
}

TEST_CASE("pca: two-mode field is captured by two components") {
  const std::size_t t = 2000, m = 30;
  Matrix data(t, m);
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t j = 0; j < m; ++j) {
      const double x = static_cast<double>(j) / m;
      const double s = 0.01 * static_cast<double>(k);
      data(k, j) = std::sin(1.3 * s) * std::sin(M_PI * x) + 0.5 * std::cos(0.7 * s) * std::cos(2 * M_PI * x) +
                   1e-3 * std::sin(17.0 * s + 40.0 * x);
    }
  const auto pca = pca_fit(data, 2);
  CHECK(pca.explained_total() >= 0.99);
}

TEST_CASE("pca: validation") {
  CHECK_THROWS_AS(pca_fit(Matrix::Ones(10, 3), 1), InputError);
  CHECK_THROWS_AS(pca_fit(Matrix::Random(10, 3), 4), InputError);
  CHECK_THROWS_AS(pca_fit(Matrix::Random(10, 3), 0), InputError);
  const auto pca = pca_fit(Matrix::Random(10, 3), 2);
  CHECK_THROWS_AS(pca.transform(Matrix::Zero(2, 4)), DimensionError);
  CHECK_THROWS_AS(pca.inverse(Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("TimeSeries: validation and slicing") {
  TimeSeries s;
  s.values = Matrix::Random(10, 2);
  s.dt = 0.5;
  s.start_time = 1.0;
  CHECK_NOTHROW(s.validate());
  const auto sl = s.slice(3, 4);
  CHECK(sl.values == s.values.middleRows(3, 4));
  CHECK(sl.start_time == 2.5);
  CHECK(s.column(1).values.col(0) == s.values.col(1));
  CHECK_THROWS_AS(s.slice(8, 4), InputError);
  s.values(0, 0) = std::nan("");
  CHECK_THROWS_AS(s.validate(), InputError);
  s.values(0, 0) = 0.0;
  s.dt = 0.0;
  CHECK_THROWS_AS(s.validate(), InputError);
}
