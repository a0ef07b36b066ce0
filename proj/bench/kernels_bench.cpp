// Serial reference vs OpenMP kernels on Lorenz-sized problems.
#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include <CLI11.hpp>

#include "nbed/bilinear_model.hpp"
#include "nbed/dynamics.hpp"
#include "nbed/kernels.hpp"
#include "nbed/nbeddyn.hpp"

using namespace nbed;

namespace {

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, double diff) {
  std::printf("%-28s serial %9.2f ms  parallel %9.2f ms  speedup %5.2fx  max|diff| %.2e\n", name, 1e3 * serial,
              1e3 * parallel, serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel timings: serial reference vs OpenMP"};
  std::size_t length = 10000, latent_dim = 6;
  int reps = 5;
  app.add_option("--length", length, "trajectory length");
  app.add_option("--dim", latent_dim, "augmented dimension");
  app.add_option("--reps", reps, "repetitions (best time is reported)");
  CLI11_PARSE(app, argc, argv);

  std::printf("threads: %d\n", omp_get_max_threads());
  Vector z0(3);
  z0 << 1.0, 1.0, 1.0;
  const auto lorenz = simulate_lorenz63(z0, 0.01, length + 999).slice(1000, length);

  BilinearODEModel model(Architecture{latent_dim, 1, true, 0, 0});
  model.randomize(0.1, 1);
  Matrix states(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(latent_dim));
  states.leftCols(1) = lorenz.values.col(0);
  states.rightCols(static_cast<Eigen::Index>(latent_dim - 1)) = init_latent(length, latent_dim - 1, 1.0, 2);
  const Matrix obs = lorenz.values.col(0);
  kernels::TrajectoryProblem problem;
  problem.field = &model;
  problem.states = &states;
  problem.obs = &obs;
  problem.lambda = 1.0;
  problem.integrator = {0.01, 1};

  kernels::TrajectoryGradient gs, gp;
  const double ts = best_of(reps, [&] { gs = kernels::trajectory_loss_serial(problem, {true, true}); });
  const double tp = best_of(reps, [&] { gp = kernels::trajectory_loss_parallel(problem, {true, true}); });
  double diff = std::abs(gs.loss - gp.loss);
  for (std::size_t i = 0; i < gs.grad_theta.size(); ++i) diff = std::max(diff, std::abs(gs.grad_theta[i] - gp.grad_theta[i]));
  diff = std::max(diff, (gs.grad_states - gp.grad_states).cwiseAbs().maxCoeff());
  row("trajectory loss + gradient", ts, tp, diff);

  std::vector<kernels::Neighbor> ns, np;
  const Matrix points = lorenz.values;
  const double ns_t = best_of(reps, [&] { ns = kernels::all_nearest_serial(points, 75); });
  const double np_t = best_of(reps, [&] { np = kernels::all_nearest_parallel(points, 75); });
  double nd = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) nd = std::max(nd, ns[i].index == np[i].index ? 0.0 : 1.0);
  row("all nearest neighbours", ns_t, np_t, nd);
  return 0;
}
