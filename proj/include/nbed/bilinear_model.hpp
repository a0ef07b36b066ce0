#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nbed/types.hpp"
#include "nbed/vector_field.hpp"

namespace nbed {

/// Shape of the latent vector field.
///
/// With `layers == 0` the field is the bilinear block itself:
///   f(X) = A X + B u(X) + c,   u(X) = (X_i X_j)_{i <= j}
/// With `layers >= 1` the block produces `width` features h_0, followed by
/// `layers - 1` tanh layers of the same width and a final linear layer to R^d.
struct Architecture {
  std::size_t latent_dim = 2;  // d_E
  std::size_t observed_dim = 1;
  bool quadratic = true;  // false drops B (single linear layer)
  std::size_t layers = 0;
  std::size_t width = 0;

  void validate() const;
  std::size_t block_rows() const { return layers == 0 ? latent_dim : width; }
  std::size_t pair_count() const { return quadratic ? latent_dim * (latent_dim + 1) / 2 : 0; }
  std::size_t param_count() const;
  std::string describe() const;

  bool operator==(const Architecture&) const = default;
};

class BilinearODEModel final : public VectorField {
 public:
  explicit BilinearODEModel(Architecture arch);
  BilinearODEModel(Architecture arch, std::vector<double> theta);

  const Architecture& architecture() const { return arch_; }

  std::size_t dim() const override { return arch_.latent_dim; }
  std::span<const double> params() const override { return theta_; }
  void set_params(std::span<const double> theta) override;

  void eval(std::span<const double> x, std::span<double> out) const override;
  void jacobian(std::span<const double> x, std::span<double> jac) const override;
  void vjp(std::span<const double> x, std::span<const double> v, std::span<double> gx,
           std::span<double> gtheta) const override;

  // Parameter views (row-major).
  Eigen::Map<const Matrix> linear() const;
  Eigen::Map<const Matrix> quadratic() const;  // block_rows x pair_count
  Eigen::Map<const Vector> bias() const;

  /// Writable parameter views, for constructing fields analytically.
  Eigen::Map<Matrix> linear_mut();
  Eigen::Map<Matrix> quadratic_mut();
  Eigen::Map<Vector> bias_mut();

  /// Column of B holding X_i X_j (i <= j).
  std::size_t pair_index(std::size_t i, std::size_t j) const;

  /// Gaussian initialisation: each weight matrix scaled by `scale / sqrt(fan_in)`,
  /// biases zero.
  void randomize(double scale, std::uint64_t seed);

 private:
  struct Offsets {
    std::size_t a, b, c, layers;
  };

  void block_forward(const double* x, double* h0) const;
  // Runs the stacked layers from h0, storing every activation (layers+1 slots of width).
  void layers_forward(const double* h0, double* acts, double* out) const;

  Architecture arch_;
  Offsets off_{};
  std::vector<double> theta_;
};

}  // namespace nbed
