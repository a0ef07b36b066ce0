#include "nbed/baselines.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "nbed/kernels.hpp"

namespace nbed {

namespace {

void require_nonconstant(const Vector& series, const char* what) {
  if (series.size() < 2) throw InputError(std::string(what) + ": series too short");
  if (!series.allFinite()) throw InputError(std::string(what) + ": series has non-finite values");
  if (series.maxCoeff() == series.minCoeff())
    throw InputError(std::string(what) + ": constant series");
}

void require_lag_range(const Vector& series, std::size_t max_lag, const char* what) {
  if (max_lag < 1) throw InputError(std::string(what) + ": max_lag must be >= 1");
  if (2 * max_lag >= static_cast<std::size_t>(series.size()))
    throw InputError(std::string(what) + ": max_lag must be < T/2");
}

Vector scalar_values(const TimeSeries& series) {
  if (series.dim() != 1)
    throw DimensionError("delay_embed: expected a scalar series, got " +
                         std::to_string(series.dim()) + " columns");
  return series.values.col(0);
}

}  // namespace

DelayEmbedding delay_embed(const Vector& series, std::size_t tau, std::size_t dim) {
  if (tau < 1 || dim < 1) throw InputError("delay_embed: tau and dim must be >= 1");
  const std::size_t t = static_cast<std::size_t>(series.size());
  const std::size_t off = (dim - 1) * tau;
  if (t <= off)
    throw InputError("delay_embed: series of length " + std::to_string(t) +
                     " too short for dim " + std::to_string(dim) + " at lag " + std::to_string(tau));
  DelayEmbedding e;
  e.tau = tau;
  e.dim = dim;
  e.data.resize(static_cast<Eigen::Index>(t - off), static_cast<Eigen::Index>(dim));
  for (std::size_t m = 0; m < t - off; ++m)
    for (std::size_t k = 0; k < dim; ++k)
      e.data(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) =
          series(static_cast<Eigen::Index>(m + off - k * tau));
  return e;
}

DelayEmbedding delay_embed(const TimeSeries& series, std::size_t tau, std::size_t dim) {
  return delay_embed(scalar_values(series), tau, dim);
}

// ---------------------------------------------------------------------------
// Lag selection

namespace {

std::vector<int> bin_indices(const Vector& series, std::size_t bins) {
  const double lo = series.minCoeff();
  const double hi = series.maxCoeff();
  const double scale = static_cast<double>(bins) / (hi - lo);
  std::vector<int> idx(static_cast<std::size_t>(series.size()));
  for (Eigen::Index i = 0; i < series.size(); ++i) {
    auto b = static_cast<long>((series(i) - lo) * scale);
    idx[static_cast<std::size_t>(i)] = static_cast<int>(std::clamp<long>(b, 0, static_cast<long>(bins) - 1));
  }
  return idx;
}

struct MiTerm {
  double mi = 0.0;
  double bias = 0.0;  // Miller-Madow estimate of the plug-in bias under independence
};

MiTerm mutual_information_at(const std::vector<int>& idx, std::size_t lag, std::size_t bins) {
  const std::size_t n = idx.size() - lag;
  std::vector<double> joint(bins * bins, 0.0), pa(bins, 0.0), pb(bins, 0.0);
  for (std::size_t t = lag; t < idx.size(); ++t) {
    const auto a = static_cast<std::size_t>(idx[t]);
    const auto b = static_cast<std::size_t>(idx[t - lag]);
    joint[a * bins + b] += 1.0;
    pa[a] += 1.0;
    pb[b] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t a = 0; a < bins; ++a)
    for (std::size_t b = 0; b < bins; ++b) {
      const double c = joint[a * bins + b];
      if (c > 0.0) mi += c * inv * std::log(c * static_cast<double>(n) / (pa[a] * pb[b]));
    }
  const auto occupied = [](const std::vector<double>& p) {
    return static_cast<double>(std::count_if(p.begin(), p.end(), [](double c) { return c > 0.0; }));
  };
  const double ka = occupied(pa), kb = occupied(pb);
  return {mi, (ka - 1.0) * (kb - 1.0) / (2.0 * static_cast<double>(n))};
}

}  // namespace

std::vector<double> mutual_information_curve(const Vector& series, std::size_t max_lag,
                                             std::size_t bins) {
  require_nonconstant(series, "mutual_information");
  require_lag_range(series, max_lag, "mutual_information");
  if (bins < 2) throw InputError("mutual_information: bins must be >= 2");
  const auto idx = bin_indices(series, bins);
  std::vector<double> curve(max_lag);
  for (std::size_t lag = 1; lag <= max_lag; ++lag)
    curve[lag - 1] = mutual_information_at(idx, lag, bins).mi;
  return curve;
}

LagEstimate lag_by_mutual_information(const Vector& series, std::size_t max_lag, std::size_t bins) {
  require_nonconstant(series, "lag_by_mutual_information");
  require_lag_range(series, max_lag, "lag_by_mutual_information");
  if (bins < 2) throw InputError("lag_by_mutual_information: bins must be >= 2");
  const auto idx = bin_indices(series, bins);

  LagEstimate est;
  est.curve.resize(max_lag);
  double peak_excess = 0.0;
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    const MiTerm term = mutual_information_at(idx, lag, bins);
    est.curve[lag - 1] = term.mi;
    peak_excess = std::max(peak_excess, term.mi / std::max(term.bias, 1e-300));
  }
  const auto argmin = static_cast<std::size_t>(
      std::min_element(est.curve.begin(), est.curve.end()) - est.curve.begin());

  // With no dependence the plug-in MI is just its bias; any "minimum" is noise.
  if (peak_excess < 2.0) {
    est.tau = argmin + 1;
    est.warning = true;
    return est;
  }
  // A minimum must hold over +-kMinimumWindow lags so that binning ripple on
  // an otherwise smooth curve is not mistaken for the first minimum.
  constexpr std::size_t kMinimumWindow = 3;
  for (std::size_t i = 1; i + 1 < max_lag; ++i) {
    if (!(est.curve[i] < est.curve[i - 1])) continue;
    const std::size_t lo = i >= kMinimumWindow ? i - kMinimumWindow : 0;
    const std::size_t hi = std::min(max_lag - 1, i + kMinimumWindow);
    bool lowest = true;
    for (std::size_t j = lo; j <= hi && lowest; ++j) lowest = est.curve[i] <= est.curve[j];
    if (lowest) {
      est.tau = i + 1;
      return est;
    }
  }
  est.tau = argmin + 1;
  est.warning = true;
  return est;
}

LagEstimate lag_by_autocorrelation(const Vector& series, std::size_t max_lag) {
  require_nonconstant(series, "lag_by_autocorrelation");
  require_lag_range(series, max_lag, "lag_by_autocorrelation");
  const Vector c = series.array() - series.mean();
  const double var = c.squaredNorm();
  const Eigen::Index t = c.size();
  const double threshold = std::exp(-1.0);

  LagEstimate est;
  est.curve.resize(max_lag);
  bool found = false;
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    const auto l = static_cast<Eigen::Index>(lag);
    const double r = c.head(t - l).dot(c.tail(t - l)) / var;
    est.curve[lag - 1] = r;
    if (!found && r < threshold) {
      est.tau = lag;
      found = true;
    }
  }
  if (!found) {
    est.tau = max_lag;
    est.warning = true;
  }
  return est;
}

// ---------------------------------------------------------------------------
// False nearest neighbours

FnnResult embedding_dim_fnn(const Vector& series, std::size_t tau, std::size_t max_dim, double rtol,
                            double atol, double accept) {
  require_nonconstant(series, "embedding_dim_fnn");
  if (tau < 1 || max_dim < 1) throw InputError("embedding_dim_fnn: tau and max_dim must be >= 1");
  const std::size_t t = static_cast<std::size_t>(series.size());
  if (t <= max_dim * tau + 1)
    throw InputError("embedding_dim_fnn: series too short for max_dim " + std::to_string(max_dim) +
                     " at lag " + std::to_string(tau));

  const Vector c = series.array() - series.mean();
  const double spread = std::sqrt(c.squaredNorm() / static_cast<double>(t));

  FnnResult res;
  bool found = false;
  for (std::size_t d = 1; d <= max_dim; ++d) {
    // Lift each d-vector with the next sample forward in time, x_{t+d tau}. Lifting
    // backwards instead would probe the strongly contracting direction of
    // dissipative flows and flag true neighbours as false.
    const DelayEmbedding lifted = delay_embed(series, tau, d + 1);
    const Matrix points = lifted.data.rightCols(static_cast<Eigen::Index>(d));
    const auto nearest = kernels::all_nearest_parallel(points, 0);

    std::size_t false_count = 0, counted = 0;
    for (std::size_t i = 0; i < nearest.size(); ++i) {
      const auto& nb = nearest[i];
      if (nb.index == kernels::npos) continue;
      const double extra = std::abs(lifted.data(static_cast<Eigen::Index>(i), 0) -
                                    lifted.data(static_cast<Eigen::Index>(nb.index), 0));
      const double rd = std::sqrt(nb.dist2);
      const double rd1 = std::sqrt(nb.dist2 + extra * extra);
      ++counted;
      const bool ratio_test = rd > 0.0 ? extra / rd > rtol : extra > 0.0;
      if (ratio_test || rd1 / spread > atol) ++false_count;
    }
    const double frac = counted ? static_cast<double>(false_count) / static_cast<double>(counted) : 0.0;
    res.fractions.push_back(frac);
    if (!found && frac < accept) {
      res.dim = d;
      found = true;
      break;
    }
  }
  if (!found) {
    res.dim = max_dim;
    res.warning = true;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Analog forecasting

AnalogCatalog build_analog_catalog(const DelayEmbedding& embedding, std::size_t k,
                                   AnalogRegression kind) {
  const Eigen::Index m = embedding.data.rows();
  if (m < 2) throw InputError("build_analog_catalog: need at least two embedded states");
  if (k < 1) throw InputError("build_analog_catalog: k must be >= 1");
  AnalogCatalog cat;
  cat.predecessors = embedding.data.topRows(m - 1);
  cat.successors = embedding.data.bottomRows(m - 1);
  cat.k = k;
  cat.kind = kind;
  return cat;
}

Vector analog_step(const AnalogCatalog& catalog, const Vector& query) {
  const std::size_t size = catalog.size();
  if (size == 0) throw InputError("analog_forecast: empty catalog");
  if (catalog.successors.rows() != catalog.predecessors.rows())
    throw InputError("analog_forecast: predecessor/successor counts differ");
  if (catalog.k < 1 || catalog.k > size)
    throw InputError("analog_forecast: k=" + std::to_string(catalog.k) + " exceeds catalog size " +
                     std::to_string(size));
  if (query.size() != catalog.predecessors.cols())
    throw DimensionError("analog_forecast: query has dimension " + std::to_string(query.size()) +
                         ", catalog " + std::to_string(catalog.predecessors.cols()));

  const auto nb = kernels::knn_serial(catalog.predecessors, query.data(), catalog.k);
  const std::size_t k = nb.size();

  std::vector<double> dist(k);
  for (std::size_t i = 0; i < k; ++i) dist[i] = std::sqrt(nb[i].dist2);
  std::vector<double> sorted = dist;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k / 2), sorted.end());
  const double bandwidth = sorted[k / 2];

  Vector w(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (bandwidth > 0.0) {
      const double r = dist[i] / bandwidth;
      w(static_cast<Eigen::Index>(i)) = std::exp(-r * r);
    } else {
      w(static_cast<Eigen::Index>(i)) = dist[i] == 0.0 ? 1.0 : 0.0;
    }
  }
  const double wsum = w.sum();
  if (!(wsum > 0.0)) w.setOnes();

  const auto dim = catalog.successors.cols();
  if (catalog.kind == AnalogRegression::locally_constant) {
    Vector out = Vector::Zero(dim);
    for (std::size_t i = 0; i < k; ++i)
      out += w(static_cast<Eigen::Index>(i)) * catalog.successors.row(static_cast<Eigen::Index>(nb[i].index)).transpose();
    return out / w.sum();
  }

  // Weighted least squares of successors on [1, p - q]; the intercept is the prediction.
  const auto pd = catalog.predecessors.cols();
  Eigen::MatrixXd design(static_cast<Eigen::Index>(k), pd + 1);
  Eigen::MatrixXd target(static_cast<Eigen::Index>(k), dim);
  for (std::size_t i = 0; i < k; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double sw = std::sqrt(w(r));
    const auto src = static_cast<Eigen::Index>(nb[i].index);
    design(r, 0) = sw;
    design.row(r).tail(pd) = sw * (catalog.predecessors.row(src) - query.transpose());
    target.row(r) = sw * catalog.successors.row(src);
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  const Eigen::MatrixXd coef = cod.solve(target);
  return coef.row(0).transpose();
}

Matrix analog_forecast(const AnalogCatalog& catalog, const Vector& query, std::size_t horizon) {
  Matrix out(static_cast<Eigen::Index>(horizon), query.size());
  Vector state = query;
  for (std::size_t h = 0; h < horizon; ++h) {
    state = analog_step(catalog, state);
    out.row(static_cast<Eigen::Index>(h)) = state.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Polynomial library and field

std::vector<std::vector<int>> quadratic_library(std::size_t dim) {
  std::vector<std::vector<int>> lib;
  lib.emplace_back(dim, 0);
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<int> e(dim, 0);
    e[i] = 1;
    lib.push_back(std::move(e));
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      std::vector<int> e(dim, 0);
      ++e[i];
      ++e[j];
      lib.push_back(std::move(e));
    }
  return lib;
}

std::string monomial_name(const std::vector<int>& exponents) {
  std::string name;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (exponents[i] == 0) continue;
    if (!name.empty()) name += '*';
    name += 'x' + std::to_string(i + 1);
    if (exponents[i] > 1) name += '^' + std::to_string(exponents[i]);
  }
  return name.empty() ? "1" : name;
}

namespace {

std::vector<int> parse_monomial(const std::string& text, std::size_t dim) {
  std::vector<int> e(dim, 0);
  if (text == "1") return e;
  std::stringstream ss(text);
  std::string factor;
  while (std::getline(ss, factor, '*')) {
    if (factor.size() < 2 || factor[0] != 'x') throw SchemaError("sparse model: bad monomial '" + text + "'");
    const auto caret = factor.find('^');
    const std::string var = factor.substr(1, caret == std::string::npos ? std::string::npos : caret - 1);
    std::size_t v = 0;
    int p = 1;
    auto r = std::from_chars(var.data(), var.data() + var.size(), v);
    if (r.ec != std::errc() || r.ptr != var.data() + var.size() || v < 1 || v > dim)
      throw SchemaError("sparse model: bad variable in monomial '" + text + "'");
    if (caret != std::string::npos) {
      const std::string pw = factor.substr(caret + 1);
      auto rp = std::from_chars(pw.data(), pw.data() + pw.size(), p);
      if (rp.ec != std::errc() || rp.ptr != pw.data() + pw.size() || p < 1)
        throw SchemaError("sparse model: bad exponent in monomial '" + text + "'");
    }
    e[v - 1] += p;
  }
  return e;
}

double monomial_value(const std::vector<int>& e, std::span<const double> x) {
  double v = 1.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (int p = 0; p < e[i]; ++p) v *= x[i];
  return v;
}

// d/dx_j of the monomial
double monomial_partial(const std::vector<int>& e, std::span<const double> x, std::size_t j) {
  if (e[j] == 0) return 0.0;
  double v = static_cast<double>(e[j]);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const int p = i == j ? e[i] - 1 : e[i];
    for (int q = 0; q < p; ++q) v *= x[i];
  }
  return v;
}

}  // namespace

PolynomialField::PolynomialField(std::vector<std::vector<int>> monomials, Matrix coefficients)
    : dim_(static_cast<std::size_t>(coefficients.rows())), monomials_(std::move(monomials)) {
  if (static_cast<std::size_t>(coefficients.cols()) != monomials_.size())
    throw DimensionError("PolynomialField: coefficient columns do not match monomial count");
  for (const auto& m : monomials_)
    if (m.size() != dim_) throw DimensionError("PolynomialField: monomial arity differs from dimension");
  theta_.assign(coefficients.data(), coefficients.data() + coefficients.size());
}

void PolynomialField::set_params(std::span<const double> theta) {
  if (theta.size() != theta_.size()) throw DimensionError("PolynomialField: wrong parameter count");
  std::copy(theta.begin(), theta.end(), theta_.begin());
}

void PolynomialField::eval(std::span<const double> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t nm = monomials_.size();
  for (std::size_t k = 0; k < nm; ++k) {
    const double v = monomial_value(monomials_[k], x);
    for (std::size_t r = 0; r < dim_; ++r) out[r] += theta_[r * nm + k] * v;
  }
}

void PolynomialField::jacobian(std::span<const double> x, std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
  const std::size_t nm = monomials_.size();
  for (std::size_t k = 0; k < nm; ++k)
    for (std::size_t j = 0; j < dim_; ++j) {
      const double p = monomial_partial(monomials_[k], x, j);
      if (p == 0.0) continue;
      for (std::size_t r = 0; r < dim_; ++r) jac[r * dim_ + j] += theta_[r * nm + k] * p;
    }
}

void PolynomialField::vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
                          std::span<double> gtheta) const {
  const std::size_t nm = monomials_.size();
  for (std::size_t k = 0; k < nm; ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) s += v[r] * theta_[r * nm + k];
    if (!gtheta.empty()) {
      const double val = monomial_value(monomials_[k], x);
      for (std::size_t r = 0; r < dim_; ++r) gtheta[r * nm + k] += v[r] * val;
    }
    if (!gx.empty() && s != 0.0)
      for (std::size_t j = 0; j < dim_; ++j) gx[j] += s * monomial_partial(monomials_[k], x, j);
  }
}

PolynomialField SparseModel::field() const { return PolynomialField(monomials, coefficients); }

// ---------------------------------------------------------------------------
// Sparse regression

Matrix finite_difference_derivative(const Matrix& states, double dt) {
  const Eigen::Index m = states.rows();
  if (m < 2) throw InputError("finite_difference_derivative: need at least two samples");
  if (!(dt > 0.0)) throw InputError("finite_difference_derivative: dt must be positive");
  Matrix d(m, states.cols());
  d.row(0) = (states.row(1) - states.row(0)) / dt;
  d.row(m - 1) = (states.row(m - 1) - states.row(m - 2)) / dt;
  for (Eigen::Index i = 1; i + 1 < m; ++i) d.row(i) = (states.row(i + 1) - states.row(i - 1)) / (2.0 * dt);
  return d;
}

namespace {

Eigen::MatrixXd feature_matrix(const Matrix& states, const std::vector<std::vector<int>>& lib) {
  Eigen::MatrixXd f(states.rows(), static_cast<Eigen::Index>(lib.size()));
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    std::span<const double> x(states.row(i).data(), static_cast<std::size_t>(states.cols()));
    for (std::size_t k = 0; k < lib.size(); ++k) f(i, static_cast<Eigen::Index>(k)) = monomial_value(lib[k], x);
  }
  return f;
}

void check_rank(const Eigen::MatrixXd& features, const std::vector<std::vector<int>>& lib) {
  // Scale columns so the rank decision is not dominated by feature magnitude.
  Eigen::MatrixXd scaled = features;
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    const double n = scaled.col(c).norm();
    if (n > 0.0) scaled.col(c) /= n;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank == scaled.cols()) return;
  std::string names;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index c = rank; c < scaled.cols(); ++c) {
    if (!names.empty()) names += ", ";
    names += monomial_name(lib[static_cast<std::size_t>(perm(c))]);
  }
  throw InputError("sparse_fit: rank-deficient features (rank " + std::to_string(rank) + " of " +
                   std::to_string(scaled.cols()) + "); dependent columns: " + names);
}

}  // namespace

SparseModel sparse_fit(const Matrix& states, double dt, double threshold, int iterations) {
  if (threshold < 0.0) throw InputError("sparse_fit: threshold must be >= 0");
  if (iterations < 1) throw InputError("sparse_fit: iterations must be >= 1");
  const auto dim = static_cast<std::size_t>(states.cols());
  auto lib = quadratic_library(dim);
  if (static_cast<std::size_t>(states.rows()) < lib.size())
    throw InputError("sparse_fit: " + std::to_string(states.rows()) + " rows for " +
                     std::to_string(lib.size()) + " monomials");

  const Eigen::MatrixXd features = feature_matrix(states, lib);
  check_rank(features, lib);
  const Matrix deriv = finite_difference_derivative(states, dt);

  SparseModel model;
  model.monomials = lib;
  model.threshold = threshold;
  model.coefficients = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(lib.size()));
  model.active.setConstant(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(lib.size()), true);

  for (std::size_t r = 0; r < dim; ++r) {
    const Eigen::VectorXd y = deriv.col(static_cast<Eigen::Index>(r));
    std::vector<Eigen::Index> support(lib.size());
    for (std::size_t k = 0; k < lib.size(); ++k) support[k] = static_cast<Eigen::Index>(k);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lib.size()));

    for (int it = 0; it < iterations; ++it) {
      coef.setZero();
      if (support.empty()) break;
      Eigen::MatrixXd sub(features.rows(), static_cast<Eigen::Index>(support.size()));
      for (std::size_t s = 0; s < support.size(); ++s) sub.col(static_cast<Eigen::Index>(s)) = features.col(support[s]);
      const Eigen::VectorXd sol = sub.colPivHouseholderQr().solve(y);
      std::vector<Eigen::Index> next;
      for (std::size_t s = 0; s < support.size(); ++s) {
        coef(support[s]) = sol(static_cast<Eigen::Index>(s));
        if (std::abs(sol(static_cast<Eigen::Index>(s))) >= threshold) next.push_back(support[s]);
      }
      if (next.size() == support.size()) break;  // fixed point
      support = std::move(next);
      if (it + 1 == iterations) {
        // Out of iterations: enforce the threshold on the last solution.
        for (Eigen::Index k = 0; k < coef.size(); ++k)
          if (std::abs(coef(k)) < threshold) coef(k) = 0.0;
      }
    }
    for (std::size_t k = 0; k < lib.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const bool on = threshold == 0.0 || (coef(kk) != 0.0 && std::abs(coef(kk)) >= threshold);
      model.active(static_cast<Eigen::Index>(r), kk) = on;
      model.coefficients(static_cast<Eigen::Index>(r), kk) = on ? coef(kk) : 0.0;
    }
  }
  return model;
}

SparseModel sparse_fit(const DelayEmbedding& embedding, double dt, double threshold, int iterations) {
  return sparse_fit(embedding.data, dt, threshold, iterations);
}

Matrix sparse_forecast(const SparseModel& model, const Vector& query, std::size_t horizon,
                       const IntegratorConfig& integrator) {
  if (static_cast<std::size_t>(query.size()) != model.dim())
    throw DimensionError("sparse_forecast: query dimension " + std::to_string(query.size()) +
                         " vs model " + std::to_string(model.dim()));
  const PolynomialField f = model.field();
  const Matrix traj = flow_trajectory(f, query, integrator, horizon);
  return traj.bottomRows(static_cast<Eigen::Index>(horizon));
}

// ---------------------------------------------------------------------------
// Persistence

void write_sparse_model(std::ostream& os, const SparseModel& model) {
  os << "# sparse_model dim=" << model.dim() << " threshold=";
  char buf[32];
  auto put = [&](double v) {
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, r.ptr - buf);
  };
  put(model.threshold);
  os << '\n' << "output";
  for (const auto& m : model.monomials) os << ',' << monomial_name(m);
  os << '\n';
  for (std::size_t r = 0; r < model.dim(); ++r) {
    os << 'x' << (r + 1);
    for (Eigen::Index k = 0; k < model.coefficients.cols(); ++k) {
      os << ',';
      put(model.coefficients(static_cast<Eigen::Index>(r), k));
    }
    os << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw SchemaError("sparse model: bad number '" + s + "' at " + where);
  return v;
}

}  // namespace

SparseModel read_sparse_model(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# sparse_model", 0) != 0)
    throw SchemaError("sparse model: missing '# sparse_model' preamble");
  std::size_t dim = 0;
  double threshold = 0.0;
  {
    std::stringstream ss(line.substr(14));
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw SchemaError("sparse model: bad preamble token '" + tok + "'");
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "dim") {
        dim = static_cast<std::size_t>(parse_double(val, "preamble dim"));
      } else if (key == "threshold") {
        threshold = parse_double(val, "preamble threshold");
      } else {
        throw SchemaError("sparse model: unknown preamble key '" + key + "'");
      }
    }
  }
  if (dim == 0) throw SchemaError("sparse model: dimension missing from preamble");
  if (!std::getline(is, line)) throw SchemaError("sparse model: missing header");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "output") throw SchemaError("sparse model: header must start with 'output'");

  SparseModel model;
  model.threshold = threshold;
  for (std::size_t k = 1; k < header.size(); ++k) model.monomials.push_back(parse_monomial(header[k], dim));
  const auto nm = static_cast<Eigen::Index>(model.monomials.size());
  model.coefficients.resize(static_cast<Eigen::Index>(dim), nm);
  for (std::size_t r = 0; r < dim; ++r) {
    if (!std::getline(is, line)) throw SchemaError("sparse model: expected " + std::to_string(dim) + " rows");
    auto cells = split_csv(line);
    if (cells.size() != header.size() || cells[0] != "x" + std::to_string(r + 1))
      throw SchemaError("sparse model: malformed row " + std::to_string(r + 1));
    for (Eigen::Index k = 0; k < nm; ++k)
      model.coefficients(static_cast<Eigen::Index>(r), k) =
          parse_double(cells[static_cast<std::size_t>(k) + 1], "row " + std::to_string(r + 1));
  }
  model.active = threshold == 0.0
                     ? decltype(model.active)::Constant(static_cast<Eigen::Index>(dim), nm, true)
                     : decltype(model.active)(model.coefficients.array() != 0.0);
  return model;
}

}  // namespace nbed
