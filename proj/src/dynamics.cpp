#include "nbed/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "nbed/rk4.hpp"

namespace nbed {

void TimeSeries::validate() const {
  if (values.rows() < 1) throw InputError("time series: need at least one sample");
  if (values.cols() < 1) throw InputError("time series: need at least one column");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("time series: dt must be > 0");
  if (!values.allFinite()) throw InputError("time series: non-finite values");
}

TimeSeries TimeSeries::slice(std::size_t first, std::size_t count) const {
  if (first + count > length()) throw InputError("time series: slice out of range");
  return {values.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)), dt,
          time_at(first)};
}

TimeSeries TimeSeries::column(std::size_t c) const {
  if (c >= dim()) throw DimensionError("time series: column out of range");
  return {values.col(static_cast<Eigen::Index>(c)), dt, start_time};
}

TimeSeries simulate_lorenz63(const Vector& z0, double dt, std::size_t steps, LorenzParams params,
                             int substeps) {
  if (z0.size() != 3) throw DimensionError("simulate_lorenz63: initial state must have 3 entries");
  const Lorenz63Field field(params);
  IntegratorConfig cfg{dt, substeps};
  return {flow_trajectory(field, z0, cfg, steps), dt, 0.0};
}

TimeSeries simulate_linear_complex(std::complex<double> alpha, std::complex<double> z0, double dt,
                                   std::size_t steps) {
  if (!(dt > 0.0)) throw InputError("simulate_linear_complex: dt must be > 0");
  Matrix values(static_cast<Eigen::Index>(steps + 1), 2);
  for (std::size_t k = 0; k <= steps; ++k) {
    const std::complex<double> z = z0 * std::exp(alpha * (static_cast<double>(k) * dt));
    values(static_cast<Eigen::Index>(k), 0) = z.real();
    values(static_cast<Eigen::Index>(k), 1) = z.imag();
  }
  return {std::move(values), dt, 0.0};
}

TimeSeries simulate_two_mode_field(std::size_t points, double omega, double dt, std::size_t steps) {
  if (!(dt > 0.0)) throw InputError("simulate_two_mode_field: dt must be > 0");
  if (points < 2) throw InputError("simulate_two_mode_field: need at least 2 grid points");
  Matrix values(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(points));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w1 = std::cos(omega * t), w2 = 0.5 * std::sin(omega * t);
    for (std::size_t j = 0; j < points; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(points - 1);
      values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          w1 * std::sin(M_PI * x) + w2 * std::cos(2.0 * M_PI * x);
    }
  }
  return {std::move(values), dt, 0.0};
}

ObservationOperator ObservationOperator::select(std::vector<std::size_t> indices) {
  if (indices.empty()) throw InputError("observation operator: empty selection");
  ObservationOperator op;
  op.kind_ = Kind::select;
  op.indices_ = std::move(indices);
  return op;
}

ObservationOperator ObservationOperator::real_part() {
  ObservationOperator op;
  op.kind_ = Kind::real_part;
  op.indices_ = {0};
  return op;
}

ObservationOperator ObservationOperator::projection(Matrix p) {
  if (p.rows() < 1) throw InputError("observation operator: projection needs >= 1 row");
  ObservationOperator op;
  op.kind_ = Kind::projection;
  op.matrix_ = std::move(p);
  return op;
}

std::size_t ObservationOperator::output_dim() const {
  return kind_ == Kind::projection ? static_cast<std::size_t>(matrix_.rows()) : indices_.size();
}

void ObservationOperator::check_compatible(std::size_t state_dim) const {
  switch (kind_) {
    case Kind::select:
      for (auto i : indices_) {
        if (i >= state_dim) {
          throw DimensionError("observation operator: index " + std::to_string(i) +
                               " outside state dimension " + std::to_string(state_dim));
        }
      }
      break;
    case Kind::real_part:
      if (state_dim != 2) throw DimensionError("observation operator: real part needs a (Re, Im) series");
      break;
    case Kind::projection:
      if (static_cast<std::size_t>(matrix_.cols()) != state_dim) {
        throw DimensionError("observation operator: projection width != state dimension");
      }
      break;
  }
}

TimeSeries observe(const TimeSeries& series, const ObservationOperator& op) {
  op.check_compatible(series.dim());
  TimeSeries out{Matrix(series.values.rows(), static_cast<Eigen::Index>(op.output_dim())), series.dt,
                 series.start_time};
  if (op.kind() == ObservationOperator::Kind::projection) {
    out.values = series.values * op.matrix().transpose();
    return out;
  }
  for (std::size_t c = 0; c < op.indices().size(); ++c) {
    out.values.col(static_cast<Eigen::Index>(c)) =
        series.values.col(static_cast<Eigen::Index>(op.indices()[c]));
  }
  return out;
}

TimeSeries add_observation_noise(const TimeSeries& series, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InputError("add_observation_noise: sigma must be >= 0");
  TimeSeries out = series;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (Eigen::Index r = 0; r < out.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) out.values(r, c) += normal(rng);
  }
  return out;
}

Matrix PCAReduction::transform(const Matrix& data) const {
  if (data.cols() != mean.size()) throw DimensionError("pca_transform: column count differs from fit");
  return (data.rowwise() - mean.transpose()) * components.transpose();
}

Matrix PCAReduction::inverse(const Matrix& scores) const {
  if (scores.cols() != components.rows()) throw DimensionError("pca_inverse: score width differs");
  Matrix out = scores * components;
  out.rowwise() += mean.transpose();
  return out;
}

double PCAReduction::explained_total() const {
  return std::accumulate(explained.begin(), explained.end(), 0.0);
}

PCAReduction pca_fit(const Matrix& data, std::size_t n_components) {
  const auto rows = static_cast<std::size_t>(data.rows());
  const auto cols = static_cast<std::size_t>(data.cols());
  if (n_components < 1 || n_components > std::min(rows, cols)) {
    throw InputError("pca_fit: n_components must be in [1, min(rows, cols)]");
  }
  PCAReduction pca;
  pca.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - pca.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double total = sv.squaredNorm();
  if (!(total > 0.0)) throw InputError("pca_fit: data has zero variance");
  pca.total_variance = total / static_cast<double>(std::max<std::size_t>(rows - 1, 1));
  const auto k = static_cast<Eigen::Index>(n_components);
  pca.components = svd.matrixV().leftCols(k).transpose();
  // Sign convention: largest-magnitude loading positive, so fits are reproducible.
  for (Eigen::Index r = 0; r < k; ++r) {
    Eigen::Index arg = 0;
    pca.components.row(r).cwiseAbs().maxCoeff(&arg);
    if (pca.components(r, arg) < 0.0) pca.components.row(r) *= -1.0;
    pca.explained.push_back(sv[r] * sv[r] / total);
  }
  return pca;
}

}  // namespace nbed
