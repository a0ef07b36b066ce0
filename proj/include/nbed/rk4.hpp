#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nbed/types.hpp"
#include "nbed/vector_field.hpp"

namespace nbed {

struct IntegratorConfig {
  double dt = 0.01;  // sampling interval
  int substeps = 1;  // RK4 steps per sampling interval

  void validate() const;
  double step() const { return dt / substeps; }
};

/// Stage inputs recorded by a taped RK4 advance, consumed by rk4_backward.
struct Rk4Tape {
  std::size_t dim = 0;
  int substeps = 0;
  double h = 0.0;
  std::vector<double> stages;  // substeps * 4 * dim
  std::vector<double> k;       // scratch: 4 * dim
  std::vector<double> adj;     // scratch: 5 * dim

  void reserve(std::size_t d, int n);
};

/// Advances `x` by one sampling interval into `out` (may not alias `x`).
/// When `tape` is non-null the stage inputs are recorded for rk4_backward.
/// Returns false if any produced value is non-finite.
bool rk4_advance(const VectorField& field, std::span<const double> x, const IntegratorConfig& cfg,
                 std::span<double> out, Rk4Tape* tape);

/// Reverse pass of a taped rk4_advance: given dL/d(out), accumulates dL/dx into
/// `adj_in` (overwritten) and dL/dtheta into `gtheta` (accumulated).
void rk4_backward(const VectorField& field, Rk4Tape& tape, std::span<const double> adj_out,
                  std::span<double> adj_in, std::span<double> gtheta);

/// One sampling interval of classical RK4. Throws DivergedError (index = 0) on
/// non-finite output.
Vector rk4_step(const VectorField& field, ConstVecRef x, const IntegratorConfig& cfg);

/// Rows 0..steps of the flow map started at x0. Throws DivergedError carrying
/// the first non-finite row index.
Matrix flow_trajectory(const VectorField& field, ConstVecRef x0, const IntegratorConfig& cfg,
                       std::size_t steps);

}  // namespace nbed
