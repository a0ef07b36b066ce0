#include "nbed/bilinear_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace nbed {

void Architecture::validate() const {
  if (observed_dim < 1) throw InputError("architecture: observed dimension must be >= 1");
  if (latent_dim < observed_dim) {
    throw InputError("architecture: augmented dimension must be >= observed dimension");
  }
  if (layers > 0 && width == 0) throw InputError("architecture: stacked layers need width >= 1");
}

std::size_t Architecture::param_count() const {
  const std::size_t rows = block_rows();
  std::size_t count = rows * latent_dim + rows * pair_count() + rows;
  if (layers > 0) {
    count += (layers - 1) * (width * width + width);
    count += latent_dim * width + latent_dim;
  }
  return count;
}

std::string Architecture::describe() const {
  std::ostringstream os;
  os << (quadratic ? "bilinear" : "linear") << " d_E=" << latent_dim << " n=" << observed_dim;
  if (layers > 0) os << " layers=" << layers << " width=" << width;
  return os.str();
}

BilinearODEModel::BilinearODEModel(Architecture arch) : arch_(arch) {
  arch_.validate();
  const std::size_t rows = arch_.block_rows();
  off_.a = 0;
  off_.b = off_.a + rows * arch_.latent_dim;
  off_.c = off_.b + rows * arch_.pair_count();
  off_.layers = off_.c + rows;
  theta_.assign(arch_.param_count(), 0.0);
}

BilinearODEModel::BilinearODEModel(Architecture arch, std::vector<double> theta)
    : BilinearODEModel(arch) {
  set_params(theta);
}

void BilinearODEModel::set_params(std::span<const double> theta) {
  if (theta.size() != theta_.size()) {
    throw DimensionError("BilinearODEModel: expected " + std::to_string(theta_.size()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  theta_.assign(theta.begin(), theta.end());
}

Eigen::Map<const Matrix> BilinearODEModel::linear() const {
  return {theta_.data() + off_.a, static_cast<Eigen::Index>(arch_.block_rows()),
          static_cast<Eigen::Index>(arch_.latent_dim)};
}

Eigen::Map<const Matrix> BilinearODEModel::quadratic() const {
  return {theta_.data() + off_.b, static_cast<Eigen::Index>(arch_.block_rows()),
          static_cast<Eigen::Index>(arch_.pair_count())};
}

Eigen::Map<const Vector> BilinearODEModel::bias() const {
  return {theta_.data() + off_.c, static_cast<Eigen::Index>(arch_.block_rows())};
}

Eigen::Map<Matrix> BilinearODEModel::linear_mut() {
  return {theta_.data() + off_.a, static_cast<Eigen::Index>(arch_.block_rows()),
          static_cast<Eigen::Index>(arch_.latent_dim)};
}

Eigen::Map<Matrix> BilinearODEModel::quadratic_mut() {
  return {theta_.data() + off_.b, static_cast<Eigen::Index>(arch_.block_rows()),
          static_cast<Eigen::Index>(arch_.pair_count())};
}

Eigen::Map<Vector> BilinearODEModel::bias_mut() {
  return {theta_.data() + off_.c, static_cast<Eigen::Index>(arch_.block_rows())};
}

std::size_t BilinearODEModel::pair_index(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  const std::size_t d = arch_.latent_dim;
  // Row-wise enumeration of the upper triangle.
  return i * d - i * (i - 1) / 2 + (j - i);
}

void BilinearODEModel::randomize(double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = arch_.latent_dim;
  const std::size_t rows = arch_.block_rows();
  std::fill(theta_.begin(), theta_.end(), 0.0);
  const double sa = scale / std::sqrt(static_cast<double>(d));
  for (std::size_t k = 0; k < rows * d; ++k) theta_[off_.a + k] = sa * normal(rng);
  if (arch_.pair_count() > 0) {
    const double sb = scale / std::sqrt(static_cast<double>(arch_.pair_count()));
    for (std::size_t k = 0; k < rows * arch_.pair_count(); ++k) theta_[off_.b + k] = sb * normal(rng);
  }
  if (arch_.layers > 0) {
    const std::size_t w = arch_.width;
    const double sw = scale / std::sqrt(static_cast<double>(w));
    std::size_t pos = off_.layers;
    for (std::size_t l = 0; l + 1 < arch_.layers; ++l) {
      for (std::size_t k = 0; k < w * w; ++k) theta_[pos + k] = sw * normal(rng);
      pos += w * w + w;
    }
    for (std::size_t k = 0; k < d * w; ++k) theta_[pos + k] = sw * normal(rng);
  }
}

void BilinearODEModel::block_forward(const double* x, double* h0) const {
  const std::size_t d = arch_.latent_dim;
  const std::size_t rows = arch_.block_rows();
  const std::size_t pairs = arch_.pair_count();
  const double* a = theta_.data() + off_.a;
  const double* b = theta_.data() + off_.b;
  const double* c = theta_.data() + off_.c;

  thread_local std::vector<double> u;
  if (pairs > 0) {
    u.resize(pairs);
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) u[p++] = x[i] * x[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = c[r];
    const double* arow = a + r * d;
    for (std::size_t k = 0; k < d; ++k) acc += arow[k] * x[k];
    if (pairs > 0) {
      const double* brow = b + r * pairs;
      for (std::size_t p = 0; p < pairs; ++p) acc += brow[p] * u[p];
    }
    h0[r] = acc;
  }
}

void BilinearODEModel::layers_forward(const double* h0, double* acts, double* out) const {
  const std::size_t w = arch_.width;
  const std::size_t d = arch_.latent_dim;
  std::copy(h0, h0 + w, acts);
  const double* pos = theta_.data() + off_.layers;
  for (std::size_t l = 0; l + 1 < arch_.layers; ++l) {
    const double* wm = pos;
    const double* bv = pos + w * w;
    const double* in = acts + l * w;
    double* next = acts + (l + 1) * w;
    for (std::size_t r = 0; r < w; ++r) {
      double acc = bv[r];
      for (std::size_t k = 0; k < w; ++k) acc += wm[r * w + k] * in[k];
      next[r] = std::tanh(acc);
    }
    pos += w * w + w;
  }
  const double* in = acts + (arch_.layers - 1) * w;
  const double* bout = pos + d * w;
  for (std::size_t r = 0; r < d; ++r) {
    double acc = bout[r];
    for (std::size_t k = 0; k < w; ++k) acc += pos[r * w + k] * in[k];
    out[r] = acc;
  }
}

void BilinearODEModel::eval(std::span<const double> x, std::span<double> out) const {
  if (arch_.layers == 0) {
    block_forward(x.data(), out.data());
    return;
  }
  thread_local std::vector<double> h0, acts;
  h0.resize(arch_.width);
  acts.resize(arch_.layers * arch_.width);
  block_forward(x.data(), h0.data());
  layers_forward(h0.data(), acts.data(), out.data());
}

void BilinearODEModel::jacobian(std::span<const double> x, std::span<double> jac) const {
  const std::size_t d = arch_.latent_dim;
  const std::size_t rows = arch_.block_rows();
  const std::size_t pairs = arch_.pair_count();
  const double* a = theta_.data() + off_.a;
  const double* b = theta_.data() + off_.b;

  // Jacobian of the bilinear block: rows x d.
  thread_local std::vector<double> jb;
  jb.assign(a, a + rows * d);
  if (pairs > 0) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* brow = b + r * pairs;
      double* jrow = jb.data() + r * d;
      std::size_t p = 0;
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j, ++p) {
          jrow[i] += brow[p] * x[j];
          jrow[j] += brow[p] * x[i];
        }
      }
    }
  }
  if (arch_.layers == 0) {
    std::copy(jb.begin(), jb.end(), jac.begin());
    return;
  }

  const std::size_t w = arch_.width;
  thread_local std::vector<double> h0, acts, cur, next;
  h0.resize(w);
  acts.resize(arch_.layers * w);
  std::vector<double> out(d);
  block_forward(x.data(), h0.data());
  layers_forward(h0.data(), acts.data(), out.data());

  cur = jb;  // w x d
  const double* pos = theta_.data() + off_.layers;
  for (std::size_t l = 0; l + 1 < arch_.layers; ++l) {
    const double* wm = pos;
    const double* act = acts.data() + (l + 1) * w;
    next.assign(w * d, 0.0);
    for (std::size_t r = 0; r < w; ++r) {
      const double deriv = 1.0 - act[r] * act[r];
      for (std::size_t k = 0; k < w; ++k) {
        const double coef = deriv * wm[r * w + k];
        for (std::size_t c = 0; c < d; ++c) next[r * d + c] += coef * cur[k * d + c];
      }
    }
    cur.swap(next);
    pos += w * w + w;
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w; ++k) acc += pos[r * w + k] * cur[k * d + c];
      jac[r * d + c] = acc;
    }
  }
}

void BilinearODEModel::vjp(std::span<const double> x, std::span<const double> v,
                           std::span<double> gx, std::span<double> gtheta) const {
  const std::size_t d = arch_.latent_dim;
  const std::size_t rows = arch_.block_rows();
  const std::size_t pairs = arch_.pair_count();
  const double* a = theta_.data() + off_.a;
  const double* b = theta_.data() + off_.b;

  thread_local std::vector<double> v0;
  if (arch_.layers == 0) {
    v0.assign(v.begin(), v.end());
  } else {
    const std::size_t w = arch_.width;
    thread_local std::vector<double> h0, acts, adj, prev;
    h0.resize(w);
    acts.resize(arch_.layers * w);
    std::vector<double> out(d);
    block_forward(x.data(), h0.data());
    layers_forward(h0.data(), acts.data(), out.data());

    std::size_t pos = off_.layers + (arch_.layers - 1) * (w * w + w);
    // Output layer.
    const double* in = acts.data() + (arch_.layers - 1) * w;
    adj.assign(w, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t k = 0; k < w; ++k) {
        gtheta[pos + r * w + k] += v[r] * in[k];
        adj[k] += v[r] * theta_[pos + r * w + k];
      }
      gtheta[pos + d * w + r] += v[r];
    }
    for (std::size_t l = arch_.layers - 1; l-- > 0;) {
      pos -= w * w + w;
      const double* act = acts.data() + (l + 1) * w;
      const double* layer_in = acts.data() + l * w;
      prev.assign(w, 0.0);
      for (std::size_t r = 0; r < w; ++r) {
        const double delta = adj[r] * (1.0 - act[r] * act[r]);
        gtheta[pos + w * w + r] += delta;
        for (std::size_t k = 0; k < w; ++k) {
          gtheta[pos + r * w + k] += delta * layer_in[k];
          prev[k] += delta * theta_[pos + r * w + k];
        }
      }
      adj.swap(prev);
    }
    v0 = adj;
  }

  thread_local std::vector<double> u, wsum;
  if (pairs > 0) {
    u.resize(pairs);
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) u[p++] = x[i] * x[j];
    }
    wsum.assign(pairs, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double vr = v0[r];
    const double* arow = a + r * d;
    double* garow = gtheta.data() + off_.a + r * d;
    for (std::size_t k = 0; k < d; ++k) {
      garow[k] += vr * x[k];
      gx[k] += vr * arow[k];
    }
    if (pairs > 0) {
      const double* brow = b + r * pairs;
      double* gbrow = gtheta.data() + off_.b + r * pairs;
      for (std::size_t p = 0; p < pairs; ++p) {
        gbrow[p] += vr * u[p];
        wsum[p] += vr * brow[p];
      }
    }
    gtheta[off_.c + r] += vr;
  }
  if (pairs > 0) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j, ++p) {
        gx[i] += wsum[p] * x[j];
        gx[j] += wsum[p] * x[i];
      }
    }
  }
}

}  // namespace nbed
