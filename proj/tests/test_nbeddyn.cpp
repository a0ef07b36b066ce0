#include <doctest.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <random>

#include "nbed/gradients.hpp"
#include "nbed/eval.hpp"
#include "nbed/nbeddyn.hpp"

using namespace nbed;

namespace {

Architecture arch(std::size_t d, std::size_t n, bool quadratic = true) {
  Architecture a;
  a.latent_dim = d;
  a.observed_dim = n;
  a.quadratic = quadratic;
  return a;
}

BilinearODEModel lorenz_model(const LorenzParams& p = {}) {
  BilinearODEModel m(arch(3, 1));
  auto a = m.linear_mut();
  a << -p.sigma, p.sigma, 0, p.rho, -1, 0, 0, 0, -p.beta;
  auto b = m.quadratic_mut();
  b(1, m.pair_index(0, 2)) = -1.0;
  b(2, m.pair_index(0, 1)) = 1.0;
  return m;
}

TimeSeries lorenz_x1(std::size_t length) {
  Vector z0(3);
  z0 << 1.0, 1.0, 1.0;
  const auto full = simulate_lorenz63(z0, 0.01, length + 1000);
  return full.slice(1000, length).column(0);
}

// Short Lorenz training shared by the inference tests; not meant to be accurate.
const TrainedModel& small_model() {
  static const TrainedModel m = [] {
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.integrator.dt = 0.01;
    cfg.seed = 3;
    return train(lorenz_x1(800), 3, cfg);
  }();
  return m;
}

// Exact Lorenz field with the true hidden coordinates as stored latents: every
// training residual is zero, so inference has a known answer.
const TrainedModel& exact_model() {
  static const TrainedModel m = [] {
    Vector z0(3);
    z0 << 1.0, 1.0, 1.0;
    const auto full = simulate_lorenz63(z0, 0.01, 1800).slice(1000, 800);
    TrainConfig cfg;
    cfg.integrator.dt = 0.01;
    TrainedModel out{lorenz_model(), {full.values.leftCols(1), full.values.rightCols(2)}, {0.0}, cfg, 0.01, 0.0};
    return out;
  }();
  return m;
}

TimeSeries slice_rows(const Matrix& values, std::size_t first, std::size_t count, double dt) {
  TimeSeries s;
  s.values = values.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  s.dt = dt;
  return s;
}

}  // namespace

TEST_CASE("eval_field: zero weights, bias and the exact Lorenz field") {
  BilinearODEModel zero(arch(4, 1));
  const Vector x = Vector::Random(4);
  Vector out(4);
  zero.eval({x.data(), 4}, {out.data(), 4});
  CHECK(out.isZero(0.0));

  BilinearODEModel biased(arch(3, 1));
  biased.bias_mut() << 1.0, -2.0, 0.5;
  const Vector origin = Vector::Zero(3);
  Vector c(3);
  biased.eval({origin.data(), 3}, {c.data(), 3});
  CHECK(c == biased.bias());

  const LorenzParams p;
  const auto m = lorenz_model(p);
  const Lorenz63Field truth(p);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-30, 30);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vector z(3), a(3), b(3);
    z << u(rng), u(rng), u(rng);
    m.eval({z.data(), 3}, {a.data(), 3});
    truth.eval({z.data(), 3}, {b.data(), 3});
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("eval_field: pair columns cover i <= j once each") {
  BilinearODEModel m(arch(4, 1));
  std::vector<bool> seen(m.architecture().pair_count(), false);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i; j < 4; ++j) {
      const std::size_t k = m.pair_index(i, j);
      REQUIRE(k < seen.size());
      CHECK_FALSE(seen[k]);
      seen[k] = true;
      CHECK(m.pair_index(j, i) == k);
    }
}

TEST_CASE("init_latent: zero scale, determinism and statistics") {
  CHECK(init_latent(10, 3, 0.0, 1).isZero(0.0));
  CHECK(init_latent(10, 3, 0.1, 7) == init_latent(10, 3, 0.1, 7));
  CHECK(init_latent(10, 3, 0.1, 7) != init_latent(10, 3, 0.1, 8));
  const Matrix y = init_latent(1000, 100, 0.1, 5);
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(y.size() - 1));
  CHECK(sd >= 0.099);
  CHECK(sd <= 0.101);
  CHECK_THROWS_AS(init_latent(3, 3, -1.0, 0), InputError);
}

TEST_CASE("train: exponential decay is learned to high accuracy") {
  TimeSeries s;
  s.dt = 0.01;
  s.values.resize(300, 1);
  for (Eigen::Index k = 0; k < 300; ++k) s.values(k, 0) = std::exp(-0.01 * static_cast<double>(k));
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.integrator.dt = 0.01;
  cfg.polish_iterations = 300;
  const auto m = train(s, arch(2, 1, false), cfg);
  CHECK(m.train_rmse < 1e-6);
  const auto f = forecast(m, m.train_latents.augmented().row(299).transpose(), 50);
  CHECK(std::abs(f.values(49, 0) - std::exp(-3.49)) < 1e-4);
}

TEST_CASE("train: with lambda = 0 the fit is at least as good as least squares") {
  // Affine scalar ODE: x' = -0.5 x + 0.2.
  TimeSeries s;
  s.dt = 0.05;
  s.values.resize(200, 1);
  for (Eigen::Index k = 0; k < 200; ++k) s.values(k, 0) = 0.4 + 0.6 * std::exp(-0.5 * 0.05 * static_cast<double>(k));
  Matrix design(199, 2);
  design.col(0) = s.values.col(0).head(199);
  design.col(1).setOnes();
  const Vector target = s.values.col(0).tail(199);
  const Vector coef = design.colPivHouseholderQr().solve(target);
  const double ls_rmse = std::sqrt((design * coef - target).squaredNorm() / 199.0);

  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.epochs = 2000;
  cfg.integrator.dt = 0.05;
  cfg.polish_iterations = 300;
  const auto m = train(s, arch(2, 1, false), cfg);
  CHECK(ls_rmse < 1e-6);
  CHECK(m.train_rmse <= ls_rmse + 1e-6);
}

TEST_CASE("train: exact Lorenz field is a zero of the fully observed loss") {
  Vector z0(3);
  z0 << 1.0, 1.0, 1.0;
  const auto full = simulate_lorenz63(z0, 0.01, 600).slice(100, 500);
  IntegratorConfig ic;
  ic.dt = 0.01;
  auto m = lorenz_model();
  BilinearODEModel exact(arch(3, 3), std::vector<double>(m.params().begin(), m.params().end()));
  const auto r = loss_and_gradients(exact, full.values, Matrix(500, 0), 1.0, ic);
  CHECK(r.loss < 1e-20);
  CHECK(one_step_rmse(exact, full.values, 3, ic) < 1e-12);
}

TEST_CASE("train: returned loss never exceeds the initial loss and history is finite") {
  const auto& m = small_model();
  REQUIRE(m.loss_history.size() == 300);
  for (double l : m.loss_history) REQUIRE(std::isfinite(l));
  const auto r = loss_and_gradients(m.model, m.train_latents.x, m.train_latents.y, m.config.lambda, m.config.integrator);
  CHECK(r.loss <= m.loss_history.front());
  CHECK(r.loss <= *std::min_element(m.loss_history.begin(), m.loss_history.end()) * (1 + 1e-12));
  CHECK(m.train_latents.x == lorenz_x1(800).values);
  CHECK(m.train_rmse == doctest::Approx(one_step_rmse(m.model, m.train_latents.augmented(), 1, m.config.integrator)));
}

TEST_CASE("train: deterministic per seed") {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.integrator.dt = 0.01;
  cfg.seed = 9;
  const auto s = lorenz_x1(300);
  const auto a = train(s, 4, cfg);
  const auto b = train(s, 4, cfg);
  CHECK(a.loss_history == b.loss_history);
  CHECK(std::memcmp(a.model.params().data(), b.model.params().data(), a.model.params().size_bytes()) == 0);
  cfg.seed = 10;
  CHECK(train(s, 4, cfg).loss_history != a.loss_history);
}

TEST_CASE("train: checkpoint restore continues identically") {
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.integrator.dt = 0.01;
  const auto s = lorenz_x1(300);
  Trainer straight(s, arch(3, 1), cfg);
  const auto full = straight.finish();

  Trainer first(s, arch(3, 1), cfg);
  first.run(25);
  const TrainCheckpoint cp = first.checkpoint();
  Trainer resumed(s, arch(3, 1), cfg);
  resumed.restore(cp);
  CHECK(resumed.epochs_done() == 25);
  const auto cont = resumed.finish();
  CHECK(cont.loss_history == full.loss_history);
  CHECK(std::memcmp(cont.model.params().data(), full.model.params().data(), full.model.params().size_bytes()) == 0);
}

TEST_CASE("train: input validation") {
  const auto s = lorenz_x1(100);
  TrainConfig cfg;
  cfg.integrator.dt = 0.01;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(s, 3, cfg), InputError);
  cfg.epochs = 5;
  CHECK_THROWS_AS(train(s, 1, cfg), InputError);
  CHECK_THROWS_AS(train(s.slice(0, 2), 3, cfg), InputError);
  cfg.integrator.dt = 0.02;
  CHECK_THROWS_AS(train(s, 3, cfg), InputError);
  cfg.integrator.dt = 0.01;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(train(s, 3, cfg), InputError);
  cfg.lambda = 1.0;
  cfg.theta_step = 1e3;
  cfg.theta_init_scale = 1.0;
  cfg.divergence_limit = 1e6;
  CHECK_THROWS_AS(train(s, 3, cfg), DivergedError);
}

TEST_CASE("nearest_training_init: exact, noisy and tied windows") {
  const auto& m = small_model();
  const auto& x = m.train_latents.x;
  const auto exact = nearest_training_init(m, slice_rows(x, 321, 40, 0.01));
  CHECK(exact.offset == 321);
  CHECK(exact.distance == 0.0);
  CHECK(exact.latents == m.train_latents.y.middleRows(321, 40));

  TimeSeries noisy = add_observation_noise(slice_rows(x, 500, 40, 0.01), 1e-3, 4);
  std::size_t brute = 0;
  double best = 1e300;
  for (Eigen::Index o = 0; o + 40 <= x.rows(); ++o) {
    const double d = (x.middleRows(o, 40) - noisy.values).squaredNorm();
    if (d < best) best = d, brute = static_cast<std::size_t>(o);
  }
  CHECK(nearest_training_init(m, noisy).offset == brute);
  CHECK(brute == 500);

  TrainedModel tied = m;
  tied.train_latents.x.middleRows(600, 10) = tied.train_latents.x.middleRows(100, 10);
  CHECK(nearest_training_init(tied, slice_rows(tied.train_latents.x, 600, 10, 0.01)).offset == 100);

  CHECK_THROWS_AS(nearest_training_init(m, slice_rows(Matrix::Zero(900, 1), 0, 900, 0.01)), InputError);
  CHECK_THROWS_AS(nearest_training_init(m, slice_rows(Matrix::Zero(10, 2), 0, 10, 0.01)), DimensionError);
}

TEST_CASE("infer_initial_condition: a training window recovers the stored latents") {
  const auto& m = exact_model();
  const auto window = slice_rows(m.train_latents.x, 400, 50, 0.01);
  const auto r = infer_initial_condition(m, window, {});
  const auto residual = loss_and_gradients(m.model, m.train_latents.x.middleRows(400, 50),
                                           m.train_latents.y.middleRows(400, 50), m.config.lambda,
                                           m.config.integrator);
  CHECK(r.initial_loss == doctest::Approx(residual.loss).epsilon(1e-12));
  CHECK(r.final_loss <= r.initial_loss);
  const Vector stored = m.train_latents.augmented().row(449).transpose();
  CHECK((r.final_state - stored).cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(r.states.leftCols(1) == window.values);
}

TEST_CASE("infer_initial_condition: random start converges on the exact field") {
  const auto& m = exact_model();
  const auto window = slice_rows(m.train_latents.x, 300, 60, 0.01);
  InferenceConfig cfg;
  cfg.init = InitStrategy::random;
  const auto r = infer_initial_condition(m, window, cfg);
  CHECK(r.final_loss < 1e-3 * r.initial_loss);
  const auto f = forecast(m, r.final_state, 10);
  const auto truth = m.train_latents.x.middleRows(360, 10);
  CHECK((f.values - truth).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("infer_initial_condition: parameters stay frozen") {
  auto m = std::make_shared<TrainedModel>(small_model());
  const std::vector<double> before(m->model.params().begin(), m->model.params().end());
  InferenceConfig cfg;
  cfg.init = InitStrategy::random;
  cfg.iterations = 200;
  infer_initial_condition(*m, slice_rows(m->train_latents.x, 10, 30, 0.01), cfg);
  CHECK(std::memcmp(before.data(), m->model.params().data(), before.size() * sizeof(double)) == 0);
}

TEST_CASE("infer_initial_condition: masks and validation") {
  const auto& m = exact_model();
  const auto window = slice_rows(m.train_latents.x, 200, 20, 0.01);
  InferenceConfig cfg;
  cfg.mask = Matrix::Zero(20, 1);
  CHECK_THROWS_AS(infer_initial_condition(m, window, cfg), InputError);
  cfg.mask = Matrix::Ones(19, 1);
  CHECK_THROWS_AS(infer_initial_condition(m, window, cfg), DimensionError);

  // Every other sample missing: observed entries are kept, missing ones are filled in.
  Matrix mask = Matrix::Ones(20, 1);
  for (Eigen::Index t = 1; t < 20; t += 2) mask(t, 0) = 0.0;
  TimeSeries gappy = window;
  for (Eigen::Index t = 1; t < 20; t += 2) gappy.values(t, 0) = std::nan("");
  cfg.mask = mask;
  const auto r = infer_initial_condition(m, gappy, cfg);
  for (Eigen::Index t = 0; t < 20; t += 2) CHECK(r.states(t, 0) == window.values(t, 0));
  double gap = 0.0;
  for (Eigen::Index t = 1; t < 20; t += 2) gap = std::max(gap, std::abs(r.states(t, 0) - window.values(t, 0)));
  CHECK(gap < 1e-6);

  CHECK_THROWS_AS(infer_initial_condition(m, slice_rows(m.train_latents.x, 0, 1, 0.01), {}), InputError);
}

TEST_CASE("forecast: one step reproduces the training one-step prediction") {
  const auto& m = small_model();
  const Matrix states = m.train_latents.augmented();
  Vector next(3);
  rk4_advance(m.model, {states.row(77).data(), 3}, m.config.integrator, {next.data(), 3}, nullptr);
  const auto f = forecast(m, states.row(77).transpose(), 1);
  CHECK(f.values.rows() == 1);
  CHECK(f.values(0, 0) == next(0));
  CHECK(forecast_states(m, states.row(77).transpose(), 1).row(0) == next.transpose());
  CHECK(f.dt == m.dt);
  CHECK_THROWS_AS(forecast(m, states.row(77).transpose(), 0), InputError);
}

TEST_CASE("forecast_states of the exact field stays on the attractor") {
  const auto& m = exact_model();
  const Vector x0 = m.train_latents.augmented().row(799).transpose();
  const Matrix gen = forecast_states(m, x0, 10000);
  CHECK(gen.cwiseAbs().maxCoeff() < 60.0);
  const double lambda1 = largest_lyapunov(gen, 0.01).exponent;
  CHECK(lambda1 > 0.6);
  CHECK(lambda1 < 1.2);
}
