#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kaa/adam.hpp"
#include "kaa/bspline.hpp"

namespace kaa {

struct KanOptions {
  double range_min = -2.0;
  double range_max = 2.0;
  int grid_size = 4;
  int order = 3;
  /// Adds w_ij * silu(x_i) next to each spline edge function.
  bool residual = false;
  /// Squashes inputs with tanh onto [-1, 1] before the spline grid.
  bool normalize_inputs = false;

  BSplineGrid grid() const;
};

/// One KAN layer whose parameters live in a ParameterStore.
///
/// output_j = sum_i phi_ij(x_i) with phi_ij(x) = sum_b c_ijb B_b(x) [+ w_ij silu(x)].
/// The coefficient tensor is (n_in * (G + k)) x n_out: row i * (G + k) + b,
/// column j holds c_ijb.
struct KanLayer {
  Index n_in = 0;
  Index n_out = 0;
  KanOptions options;
  std::size_t coefficients = 0;
  std::optional<std::size_t> residual_weight;

  /// Registers coefficients drawn uniformly from [-0.1, 0.1] / sqrt(n_in);
  /// residual weights (if enabled) start at the same scale.
  static KanLayer create(ParameterStore& store, const std::string& name, Index n_in, Index n_out,
                         const KanOptions& options, std::mt19937_64& rng);

  Index num_basis() const { return options.grid_size + options.order; }
};

/// KAN layer on the tape; `bound` is the store bound by ParameterStore::bind.
ad::Var kan_forward(const KanLayer& layer, const std::vector<ad::Var>& bound, const ad::Var& x);

/// Tape-free evaluation.
Tensor kan_forward(const KanLayer& layer, const ParameterStore& store, const Tensor& x);

/// Sequential composition without extra activations. Throws ShapeError naming
/// the first incompatible layer.
ad::Var kan_stack_forward(std::span<const KanLayer> layers, const std::vector<ad::Var>& bound,
                          const ad::Var& x);
Tensor kan_stack_forward(std::span<const KanLayer> layers, const ParameterStore& store,
                         const Tensor& x);

// ---------------------------------------------------------------------------
// Modified zero-order spline scoring on the circulant alignment matrix.

/// Score of each row: s_j = sum_k sum_l c(k-1, l-1) * B*_l(inputs(j, k)), with
/// the grid width d = coefficients.rows() = coefficients.cols() = inputs.cols().
Vector bstar_kan_scores(const Tensor& coefficients, const Tensor& inputs);

/// Coefficients that reproduce `target_ranks` exactly on the d^2 x d circulant
/// alignment matrix. Row j = a*d + b + 1 (1-based) activates only c_{d-b, a+1},
/// which receives target_ranks[j]. Throws ParameterError unless the input is a
/// permutation of 1..d^2.
Tensor kaa_exact_fit(int d, std::span<const int> target_ranks);

}  // namespace kaa
