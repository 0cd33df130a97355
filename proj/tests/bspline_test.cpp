#include <gtest/gtest.h>

#include <random>

#include "kaa/bspline.hpp"
#include "kaa/gradcheck.hpp"

using namespace kaa;

namespace {

// Textbook recursive Cox-de Boor on the same knot vector, with half-open
// (t_i, t_{i+1}] order-0 cells.
double cox_de_boor(const BSplineGrid& g, int i, int k, double x) {
  if (k == 0) {
    const double a = g.knot(i), b = g.knot(i + 1);
    if (i == g.order() && x == g.range_min()) return 1.0;
    return (x > a && x <= b) ? 1.0 : 0.0;
  }
  const double left = (x - g.knot(i)) / (g.knot(i + k) - g.knot(i));
  const double right = (g.knot(i + k + 1) - x) / (g.knot(i + k + 1) - g.knot(i + 1));
  return left * cox_de_boor(g, i, k - 1, x) + right * cox_de_boor(g, i + 1, k - 1, x);
}

}  // namespace

TEST(BSplineGrid, KnotCountAndBasisCount) {
  const BSplineGrid g(-1.0, 1.0, 4, 3);
  EXPECT_EQ(g.num_knots(), 4 + 6 + 1);
  EXPECT_EQ(g.num_basis(), 7);
  for (int i = 0; i + 1 < g.num_knots(); ++i) EXPECT_LT(g.knot(i), g.knot(i + 1));
  EXPECT_DOUBLE_EQ(g.knot(3), -1.0);
  EXPECT_DOUBLE_EQ(g.knot(7), 1.0);
}

TEST(BSplineGrid, InvalidArgumentsAreRejected) {
  EXPECT_THROW(BSplineGrid(1.0, 1.0, 2, 1), ParameterError);
  EXPECT_THROW(BSplineGrid(0.0, 1.0, 0, 1), ParameterError);
  EXPECT_THROW(BSplineGrid(0.0, 1.0, 2, -1), ParameterError);
}

TEST(BSplineBasis, OrderZeroIndicators) {
  const BSplineGrid g(0.0, 2.0, 2, 0);
  EXPECT_EQ(bspline_basis(0.5, g), (Vector(2) << 1, 0).finished());
  EXPECT_EQ(bspline_basis(1.5, g), (Vector(2) << 0, 1).finished());
  // Cells are (a, b]: the shared knot belongs to the left cell.
  EXPECT_EQ(bspline_basis(1.0, g), (Vector(2) << 1, 0).finished());
  EXPECT_EQ(bspline_basis(0.0, g), (Vector(2) << 1, 0).finished());
}

TEST(BSplineBasis, HatPeaksAtInteriorKnot) {
  const BSplineGrid g(0.0, 4.0, 4, 1);
  const Vector b = bspline_basis(2.0, g);
  ASSERT_EQ(b.size(), 5);
  // Hat i is centred on knot i + 1; knot 3 sits at x = 2.
  EXPECT_NEAR(b(2), 1.0, 1e-15);
  EXPECT_NEAR(b(1), 0.0, 1e-15);
  EXPECT_NEAR(b(3), 0.0, 1e-15);
}

TEST(BSplineBasis, PartitionOfUnity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  for (int order = 1; order <= 3; ++order) {
    for (int grid : {1, 2, 4, 8}) {
      const BSplineGrid g(-3.0, 5.0, grid, order);
      for (int t = 0; t < 1000; ++t) {
        const Vector b = bspline_basis(u(rng), g);
        EXPECT_NEAR(b.sum(), 1.0, 1e-12);
        EXPECT_GE(b.minCoeff(), 0.0);
      }
    }
  }
}

TEST(BSplineBasis, MatchesRecursiveDefinition) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int order = 0; order <= 3; ++order) {
    for (int grid : {1, 3, 8}) {
      const BSplineGrid g(-1.0, 2.0, grid, order);
      for (int t = 0; t < 200; ++t) {
        const double x = u(rng);
        const Vector b = bspline_basis(x, g);
        for (int i = 0; i < g.num_basis(); ++i) EXPECT_NEAR(b(i), cox_de_boor(g, i, order, x), 1e-12);
      }
    }
  }
}

TEST(BSplineBasis, OutOfRangeInputsAreClamped) {
  const BSplineGrid g(0.0, 1.0, 3, 2);
  EXPECT_EQ(bspline_basis(-4.0, g), bspline_basis(0.0, g));
  EXPECT_EQ(bspline_basis(9.0, g), bspline_basis(1.0, g));
  EXPECT_TRUE(bspline_basis_derivative(9.0, g).isZero());
}

TEST(BSplineBasis, DerivativeMatchesCentralDifference) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> offset(0.2, 0.8);
  for (int order = 1; order <= 3; ++order) {
    const BSplineGrid g(-2.0, 2.0, 4, order);
    for (int t = 0; t < 50; ++t) {
      const int cell = static_cast<int>(rng() % 4);
      const double x = -2.0 + (cell + offset(rng)) * g.step();
      const double h = 1e-6;
      const Vector fd = (bspline_basis(x + h, g) - bspline_basis(x - h, g)) / (2 * h);
      EXPECT_LT((bspline_basis_derivative(x, g) - fd).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(BStar, SpotValues) {
  EXPECT_EQ(bstar_eval(1, 2, 1.5), 1);
  EXPECT_EQ(bstar_eval(1, 2, 0.5), 0);
  EXPECT_EQ(bstar_eval(1, 2, 1.0), 0);
  EXPECT_EQ(bstar_eval(2, 2, 4.0), 1);
  EXPECT_EQ(bstar_eval(2, 2, 3.0), 0);
}

TEST(BStar, IntegerActivationIsMultipleOfD) {
  for (int d = 1; d <= 8; ++d) {
    for (int x = 1; x <= d * d; ++x) {
      int active = 0;
      for (int l = 1; l <= d; ++l) {
        const int v = bstar_eval(l, d, x);
        EXPECT_EQ(v == 1, x == l * d) << "d=" << d << " l=" << l << " x=" << x;
        active += v;
      }
      EXPECT_EQ(active, x % d == 0 ? 1 : 0);
    }
  }
}

TEST(BStar, IndexOutOfRange) {
  EXPECT_THROW(bstar_eval(0, 3, 1.0), ParameterError);
  EXPECT_THROW(bstar_eval(4, 3, 1.0), ParameterError);
}

TEST(BSplineExpand, LayoutAndGradient) {
  const BSplineGrid g(-1.0, 1.0, 3, 2);
  Tensor x(2, 2);
  x << -0.5, 0.1, 0.4, 0.75;
  ad::Tape tape;
  const ad::Var e = ad::bspline_expand(tape.constant(x), g);
  ASSERT_EQ(e.value().rows(), 2);
  ASSERT_EQ(e.value().cols(), 2 * g.num_basis());
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      EXPECT_TRUE(e.value().row(r).segment(c * g.num_basis(), g.num_basis()).transpose().isApprox(
          bspline_basis(x(r, c), g)));
    }
  }
  const Tensor weights = Tensor::Random(2, 2 * g.num_basis());
  const double err = finite_diff_check(
      [&](ad::Tape&, const ad::Var& in) {
        return ad::sum(ad::mul_constant(ad::bspline_expand(in, g), weights));
      },
      x);
  EXPECT_LT(err, 1e-6);
}
