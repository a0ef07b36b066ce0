#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "nbed/types.hpp"
#include "nbed/vector_field.hpp"

namespace nbed {

/// Uniformly sampled multivariate series, one row per sample.
struct TimeSeries {
  Matrix values;
  double dt = 1.0;
  double start_time = 0.0;

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
  double time_at(std::size_t k) const { return start_time + static_cast<double>(k) * dt; }

  /// Throws InputError unless T >= 1, dt > 0 and all values are finite.
  void validate() const;

  /// Rows [first, first + count) with the start time shifted accordingly.
  TimeSeries slice(std::size_t first, std::size_t count) const;
  /// Single column as a series.
  TimeSeries column(std::size_t c) const;
};

/// Lorenz-63 trajectory with `steps + 1` rows starting at z0, integrated with
/// RK4 using `substeps` internal steps per sample.
TimeSeries simulate_lorenz63(const Vector& z0, double dt, std::size_t steps, LorenzParams params = {},
                             int substeps = 1);

/// Exact samples z0 * exp(alpha * k dt), k = 0..steps, as columns (Re, Im).
TimeSeries simulate_linear_complex(std::complex<double> alpha, std::complex<double> z0, double dt,
                                   std::size_t steps);

/// Field on `points` grid nodes made of two fixed spatial patterns,
/// sin(pi x) and cos(2 pi x), weighted by cos(omega t) and 0.5 sin(omega t).
TimeSeries simulate_two_mode_field(std::size_t points, double omega, double dt, std::size_t steps);

/// Observation operator H mapping a full state series to measured columns.
class ObservationOperator {
 public:
  enum class Kind { select, real_part, projection };

  static ObservationOperator select(std::vector<std::size_t> indices);
  /// Real part of a (Re, Im) two-column complex series.
  static ObservationOperator real_part();
  /// Linear map x = P z, with P of shape n x state_dim.
  static ObservationOperator projection(Matrix p);

  Kind kind() const { return kind_; }
  const std::vector<std::size_t>& indices() const { return indices_; }
  const Matrix& matrix() const { return matrix_; }

  std::size_t output_dim() const;
  void check_compatible(std::size_t state_dim) const;

 private:
  Kind kind_ = Kind::select;
  std::vector<std::size_t> indices_;
  Matrix matrix_;
};

TimeSeries observe(const TimeSeries& series, const ObservationOperator& op);

/// Adds i.i.d. N(0, sigma^2) noise, deterministic per seed.
TimeSeries add_observation_noise(const TimeSeries& series, double sigma, std::uint64_t seed);

struct PCAReduction {
  Vector mean;                  // original-dim
  Matrix components;            // n_components x original-dim, orthonormal rows
  std::vector<double> explained;  // variance fraction per component, non-increasing
  double total_variance = 0.0;

  Matrix transform(const Matrix& data) const;  // rows x n_components
  Matrix inverse(const Matrix& scores) const;  // rows x original-dim
  double explained_total() const;
};

/// Principal components of the rows of `data`. Throws InputError for
/// zero-variance data or n_components > min(rows, cols).
PCAReduction pca_fit(const Matrix& data, std::size_t n_components);

}  // namespace nbed
