#pragma once

#include <Eigen/Dense>

#include "kaa/autodiff.hpp"

namespace kaa {

/// Uniform knot grid of G cells on [range_min, range_max], extended by `order`
/// knots on each side. Order-k bases: G + k functions.
class BSplineGrid {
 public:
  BSplineGrid(double range_min, double range_max, int grid_size, int order);

  double range_min() const { return range_min_; }
  double range_max() const { return range_max_; }
  int grid_size() const { return grid_size_; }
  int order() const { return order_; }
  int num_basis() const { return grid_size_ + order_; }
  double step() const { return (range_max_ - range_min_) / grid_size_; }
  /// Knot i for i in [0, G + 2k].
  double knot(int i) const { return range_min_ + (i - order_) * step(); }
  int num_knots() const { return grid_size_ + 2 * order_ + 1; }

  /// Interior cell holding x after clamping; cells are half-open (a, b],
  /// with range_min assigned to the first cell.
  int cell(double x) const;
  double clamp(double x) const;

  friend bool operator==(const BSplineGrid&, const BSplineGrid&) = default;

 private:
  double range_min_;
  double range_max_;
  int grid_size_;
  int order_;
};

/// Cox-de Boor evaluation of all G + k basis functions at clamp(x).
Vector bspline_basis(double x, const BSplineGrid& grid);

/// d/dx of every basis function. Zero outside the range and for order 0.
Vector bspline_basis_derivative(double x, const BSplineGrid& grid);

/// Basis values (and optionally derivatives) written into preallocated rows.
using StridedRow = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

void bspline_basis_into(double x, const BSplineGrid& grid, StridedRow values, StridedRow derivatives);

/// Modified zero-order spline on the grid of width d over (0, d^2]:
/// 1 on (l*d - 1, l*d], 0 elsewhere. Throws ParameterError unless 1 <= l <= d.
int bstar_eval(int l, int d, double x);

namespace ad {
/// Expands each column of x into its B-spline basis: B x n_in input gives
/// B x (n_in * (G + k)) with column block i holding the basis of x(:, i).
Var bspline_expand(const Var& x, const BSplineGrid& grid);
}  // namespace ad

}  // namespace kaa
