#include "kaa/bspline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace kaa {

namespace {

constexpr int kMaxOrder = 8;

// Nonzero order-p basis functions on knot interval [t_J, t_{J+1}] (Piegl & Tiller A2.2).
// When `lower` is given it also receives the order p-1 functions of the same span.
using Local = std::array<double, kMaxOrder + 1>;

void local_basis(const BSplineGrid& g, int span, int p, double x, Local& n, Local* lower = nullptr) {
  Local left{}, right{};
  n[0] = 1.0;
  if (lower && p == 1) *lower = n;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - g.knot(span + 1 - j);
    right[j] = g.knot(span + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
    if (lower && j == p - 1) *lower = n;
  }
}

/// Nonzero values and derivatives at x: entries q = 0..k belong to basis cell + q.
int local_values(const BSplineGrid& grid, double x, Local& values, Local& derivs) {
  const int k = grid.order();
  const double xc = grid.clamp(x);
  const int c = grid.cell(xc);
  Local lower{};
  local_basis(grid, c + k, k, xc, values, k > 0 ? &lower : nullptr);
  derivs.fill(0.0);
  if (k > 0 && x >= grid.range_min() && x <= grid.range_max()) {
    const double inv_h = 1.0 / grid.step();
    for (int r = 0; r <= k; ++r) {
      const double a = r >= 1 ? lower[r - 1] : 0.0;
      const double b = r <= k - 1 ? lower[r] : 0.0;
      derivs[r] = (a - b) * inv_h;
    }
  }
  return c;
}

}  // namespace

BSplineGrid::BSplineGrid(double range_min, double range_max, int grid_size, int order)
    : range_min_(range_min), range_max_(range_max), grid_size_(grid_size), order_(order) {
  if (!(range_min < range_max)) throw ParameterError("B-spline grid needs range_min < range_max");
  if (grid_size < 1) throw ParameterError("B-spline grid size must be positive");
  if (order < 0 || order > kMaxOrder) {
    throw ParameterError("B-spline order must lie in [0, " + std::to_string(kMaxOrder) + "]");
  }
}

double BSplineGrid::clamp(double x) const { return std::clamp(x, range_min_, range_max_); }

int BSplineGrid::cell(double x) const {
  const double u = (clamp(x) - range_min_) / step();
  const int c = static_cast<int>(std::ceil(u)) - 1;
  return std::clamp(c, 0, grid_size_ - 1);
}

void bspline_basis_into(double x, const BSplineGrid& grid, StridedRow values, StridedRow derivatives) {
  Local v{}, dv{};
  const int c = local_values(grid, x, v, dv);
  values.setZero();
  for (int r = 0; r <= grid.order(); ++r) values[c + r] = v[r];
  if (derivatives.size() == 0) return;
  derivatives.setZero();
  for (int r = 0; r <= grid.order(); ++r) derivatives[c + r] = dv[r];
}

Vector bspline_basis(double x, const BSplineGrid& grid) {
  Eigen::RowVectorXd v(grid.num_basis());
  Eigen::RowVectorXd none(0);
  bspline_basis_into(x, grid, v, none);
  return v.transpose();
}

Vector bspline_basis_derivative(double x, const BSplineGrid& grid) {
  Eigen::RowVectorXd v(grid.num_basis()), d(grid.num_basis());
  bspline_basis_into(x, grid, v, d);
  return d.transpose();
}

int bstar_eval(int l, int d, double x) {
  if (d < 1) throw ParameterError("B* grid width must be positive");
  if (l < 1 || l > d) {
    throw ParameterError("B* index " + std::to_string(l) + " outside [1, " + std::to_string(d) + "]");
  }
  const double top = static_cast<double>(l) * d;
  return (top - 1.0 < x && x <= top) ? 1 : 0;
}

namespace ad {

Var bspline_expand(const Var& x, const BSplineGrid& grid) {
  const Index rows = x.rows();
  const Index n_in = x.cols();
  const Index nb = grid.num_basis();
  const int k = grid.order();
  Tensor values = Tensor::Zero(rows, n_in * nb);
  Tensor derivs = Tensor::Zero(rows, n_in * nb);
  const Tensor& xv = x.value();
  Local v{}, dv{};
  for (Index i = 0; i < n_in; ++i) {
    for (Index r = 0; r < rows; ++r) {
      const Index base = i * nb + local_values(grid, xv(r, i), v, dv);
      for (int q = 0; q <= k; ++q) {
        values(r, base + q) = v[q];
        derivs(r, base + q) = dv[q];
      }
    }
  }
  return x.tape()->record(std::move(values), {x},
                          [x, derivs, n_in, nb](Tape& tp, const Tensor& g) {
                            const Tensor prod = g.cwiseProduct(derivs);
                            Tensor gx(prod.rows(), n_in);
                            for (Index i = 0; i < n_in; ++i) {
                              gx.col(i) = prod.middleCols(i * nb, nb).rowwise().sum();
                            }
                            tp.accumulate(x, gx);
                          });
}

}  // namespace ad
}  // namespace kaa
