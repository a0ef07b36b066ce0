#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "nbed/dynamics.hpp"
#include "nbed/rk4.hpp"
#include "nbed/types.hpp"
#include "nbed/vector_field.hpp"

namespace nbed {

/// Delay coordinates of a scalar series: row m holds
/// [x_{m+o}, x_{m+o-tau}, ..., x_{m+o-(dim-1)tau}] with o = (dim-1) tau.
struct DelayEmbedding {
  std::size_t tau = 1;
  std::size_t dim = 1;
  Matrix data;  // M x dim, M = T - (dim-1) tau

  /// Index in the source series of the sample in column 0 of row m.
  std::size_t source_index(std::size_t m) const { return m + (dim - 1) * tau; }
  std::size_t offset() const { return (dim - 1) * tau; }
};

DelayEmbedding delay_embed(const Vector& series, std::size_t tau, std::size_t dim);
DelayEmbedding delay_embed(const TimeSeries& series, std::size_t tau, std::size_t dim);

struct LagEstimate {
  std::size_t tau = 1;
  bool warning = false;       // no qualifying crossing/minimum was found
  std::vector<double> curve;  // curve[k] is the statistic at lag k + 1
};

/// Histogram mutual information between x_t and x_{t-tau} (equal-width bins
/// over the series range), for tau = 1..max_lag.
std::vector<double> mutual_information_curve(const Vector& series, std::size_t max_lag,
                                             std::size_t bins);

/// First local minimum of the MI curve (lowest value within +-3 lags). When MI never rises clearly above the
/// finite-sample bias of the histogram estimator (no detectable dependence),
/// or no local minimum exists, the argmin is returned with the warning flag set.
LagEstimate lag_by_mutual_information(const Vector& series, std::size_t max_lag,
                                      std::size_t bins = 32);

/// First lag whose sample autocorrelation falls below 1/e.
LagEstimate lag_by_autocorrelation(const Vector& series, std::size_t max_lag);

struct FnnResult {
  std::size_t dim = 1;
  bool warning = false;          // no dimension reached the acceptance fraction
  std::vector<double> fractions;  // fractions[k] is the FNN fraction at dimension k + 1
};

/// Kennel false-nearest-neighbour test; smallest dimension whose false
/// fraction falls below `accept`.
FnnResult embedding_dim_fnn(const Vector& series, std::size_t tau, std::size_t max_dim,
                            double rtol = 10.0, double atol = 2.0, double accept = 0.01);

enum class AnalogRegression { locally_constant, locally_linear };

struct AnalogCatalog {
  Matrix predecessors;  // embedded states
  Matrix successors;    // one-step-ahead embedded states
  std::size_t k = 40;
  AnalogRegression kind = AnalogRegression::locally_linear;

  std::size_t size() const { return static_cast<std::size_t>(predecessors.rows()); }
};

/// Catalog of consecutive embedding rows (m -> m + 1).
AnalogCatalog build_analog_catalog(const DelayEmbedding& embedding, std::size_t k,
                                   AnalogRegression kind);

/// One analog step from `query`.
Vector analog_step(const AnalogCatalog& catalog, const Vector& query);

/// Iterated analog forecast; row h - 1 is the embedded state after h steps.
Matrix analog_forecast(const AnalogCatalog& catalog, const Vector& query, std::size_t horizon);

/// Degree <= 2 monomial exponents in `dim` variables: 1, x_i, x_i x_j (i <= j).
std::vector<std::vector<int>> quadratic_library(std::size_t dim);
std::string monomial_name(const std::vector<int>& exponents);

/// Polynomial vector field from a coefficient table; theta = row-major coefficients.
class PolynomialField final : public VectorField {
 public:
  PolynomialField(std::vector<std::vector<int>> monomials, Matrix coefficients);

  std::size_t dim() const override { return dim_; }
  std::span<const double> params() const override { return theta_; }
  void set_params(std::span<const double> theta) override;

  void eval(std::span<const double> x, std::span<double> out) const override;
  void jacobian(std::span<const double> x, std::span<double> jac) const override;
  void vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
           std::span<double> gtheta) const override;

 private:
  std::size_t dim_;
  std::vector<std::vector<int>> monomials_;
  std::vector<double> theta_;
};

struct SparseModel {
  std::vector<std::vector<int>> monomials;
  Matrix coefficients;  // dim x monomials
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> active;
  double threshold = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(coefficients.rows()); }
  PolynomialField field() const;
};

/// Centered finite-difference time derivatives (one-sided at both ends).
Matrix finite_difference_derivative(const Matrix& states, double dt);

/// Sequentially thresholded least squares of derivative estimates on the
/// quadratic library. Throws InputError naming the dependent columns when the
/// feature matrix is rank-deficient.
SparseModel sparse_fit(const Matrix& states, double dt, double threshold, int iterations = 10);
SparseModel sparse_fit(const DelayEmbedding& embedding, double dt, double threshold, int iterations = 10);

/// RK4 integration of the fitted polynomial field; row h - 1 is the state after h steps.
Matrix sparse_forecast(const SparseModel& model, const Vector& query, std::size_t horizon,
                       const IntegratorConfig& integrator);

/// Text table: header `output,<monomial...>`, one row per output dimension.
void write_sparse_model(std::ostream& os, const SparseModel& model);
SparseModel read_sparse_model(std::istream& is);

}  // namespace nbed
