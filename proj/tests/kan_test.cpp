#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kaa/gradcheck.hpp"
#include "kaa/kan.hpp"
#include "kaa/mrd.hpp"

using namespace kaa;

namespace {

KanOptions options(double lo, double hi, int grid, int order) {
  KanOptions o;
  o.range_min = lo;
  o.range_max = hi;
  o.grid_size = grid;
  o.order = order;
  return o;
}

// Direct double sum over inputs and basis functions.
Tensor kan_oracle(const KanLayer& layer, const Tensor& coeff, const Tensor& x) {
  const BSplineGrid g = layer.options.grid();
  Tensor out = Tensor::Zero(x.rows(), layer.n_out);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index i = 0; i < layer.n_in; ++i) {
      const Vector b = bspline_basis(x(r, i), g);
      for (Index j = 0; j < layer.n_out; ++j) {
        for (Index k = 0; k < layer.num_basis(); ++k) out(r, j) += coeff(i * layer.num_basis() + k, j) * b(k);
      }
    }
  }
  return out;
}

}  // namespace

TEST(KanLayer, ZeroCoefficientsGiveZeroOutput) {
  std::mt19937_64 rng(0);
  ParameterStore store;
  const KanLayer layer = KanLayer::create(store, "kan", 3, 2, options(-1, 1, 4, 3), rng);
  store[layer.coefficients].value.setZero();
  EXPECT_TRUE(kan_forward(layer, store, Tensor::Random(6, 3)).isZero());
}

TEST(KanLayer, InitializationScale) {
  std::mt19937_64 rng(0);
  ParameterStore store;
  const KanLayer layer = KanLayer::create(store, "kan", 4, 3, options(-1, 1, 4, 2), rng);
  const Tensor& c = store[layer.coefficients].value;
  EXPECT_EQ(c.rows(), 4 * 6);
  EXPECT_EQ(c.cols(), 3);
  EXPECT_LE(c.cwiseAbs().maxCoeff(), 0.1 / 2.0);
  EXPECT_FALSE(layer.residual_weight.has_value());
}

TEST(KanLayer, SingleOrderZeroCell) {
  std::mt19937_64 rng(0);
  ParameterStore store;
  const KanLayer layer = KanLayer::create(store, "kan", 1, 1, options(0, 2, 2, 0), rng);
  store[layer.coefficients].value << 0.0, 3.0;
  Tensor x(4, 1);
  x << 0.5, 1.2, 1.9, 0.99;
  const Tensor y = kan_forward(layer, store, x);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_EQ(y(1, 0), 3.0);
  EXPECT_EQ(y(2, 0), 3.0);
  EXPECT_EQ(y(3, 0), 0.0);
}

TEST(KanLayer, MatchesDirectSumAndTape) {
  std::mt19937_64 rng(5);
  for (int order = 0; order <= 3; ++order) {
    ParameterStore store;
    const KanLayer layer = KanLayer::create(store, "kan", 3, 4, options(-1.5, 1.5, 5, order), rng);
    store[layer.coefficients].value.setRandom();
    const Tensor x = 1.4 * Tensor::Random(7, 3);
    const Tensor y = kan_forward(layer, store, x);
    EXPECT_LT((y - kan_oracle(layer, store[layer.coefficients].value, x)).cwiseAbs().maxCoeff(), 1e-12);
    ad::Tape tape;
    const auto bound = store.bind(tape);
    EXPECT_LT((kan_forward(layer, bound, tape.constant(x)).value() - y).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(KanLayer, LinearInCoefficients) {
  std::mt19937_64 rng(6);
  ParameterStore store;
  const KanLayer layer = KanLayer::create(store, "kan", 2, 3, options(-1, 1, 4, 3), rng);
  const Tensor x = Tensor::Random(10, 2);
  const Tensor c1 = Tensor::Random(14, 3), c2 = Tensor::Random(14, 3);
  store[layer.coefficients].value = c1;
  const Tensor y1 = kan_forward(layer, store, x);
  store[layer.coefficients].value = c2;
  const Tensor y2 = kan_forward(layer, store, x);
  store[layer.coefficients].value = c1 + c2;
  EXPECT_LT((kan_forward(layer, store, x) - y1 - y2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KanLayer, ResidualTermAddsSilu) {
  std::mt19937_64 rng(7);
  KanOptions o = options(-1, 1, 3, 2);
  o.residual = true;
  ParameterStore store;
  const KanLayer layer = KanLayer::create(store, "kan", 2, 1, o, rng);
  ASSERT_TRUE(layer.residual_weight.has_value());
  store[layer.coefficients].value.setZero();
  store[*layer.residual_weight].value << 2.0, -1.0;
  Tensor x(1, 2);
  x << 0.5, -0.3;
  const auto silu = [](double v) { return v / (1.0 + std::exp(-v)); };
  EXPECT_NEAR(kan_forward(layer, store, x)(0, 0), 2.0 * silu(0.5) - silu(-0.3), 1e-14);
}

TEST(KanLayer, WidthMismatchIsShapeError) {
  std::mt19937_64 rng(0);
  ParameterStore store;
  const KanLayer layer = KanLayer::create(store, "kan", 3, 1, options(-1, 1, 2, 1), rng);
  EXPECT_THROW(kan_forward(layer, store, Tensor::Zero(2, 4)), ShapeError);
}

TEST(KanLayer, GradientsMatchFiniteDifferences) {
  for (int order = 0; order <= 3; ++order) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(order));
    ParameterStore store;
    const KanLayer layer = KanLayer::create(store, "kan", 3, 2, options(-1, 1, 4, order), rng);
    // Inputs sit mid-cell so order 0 and knot kinks stay out of reach.
    Tensor x(5, 3);
    for (Index r = 0; r < x.rows(); ++r) {
      for (Index c = 0; c < x.cols(); ++c) x(r, c) = -1.0 + 0.5 * static_cast<double>((r + 2 * c) % 4) + 0.2;
    }
    const Tensor mix = Tensor::Random(5, 2);
    const double err = finite_diff_check(
        [&](ad::Tape& tape, const ad::Var& c) {
          std::vector<ad::Var> bound{c};
          return ad::sum(ad::mul_constant(kan_forward(layer, bound, tape.constant(x)), mix));
        },
        Tensor::Random(layer.n_in * layer.num_basis(), 2));
    EXPECT_LT(err, 1e-4) << "order " << order;
  }
}

TEST(KanStack, SingleLayerEqualsLayer) {
  std::mt19937_64 rng(1);
  ParameterStore store;
  const std::vector<KanLayer> layers{KanLayer::create(store, "a", 2, 3, options(-1, 1, 4, 3), rng)};
  const Tensor x = Tensor::Random(4, 2);
  EXPECT_EQ(kan_stack_forward(layers, store, x), kan_forward(layers[0], store, x));
}

TEST(KanStack, ZeroSecondLayerGivesZero) {
  std::mt19937_64 rng(1);
  ParameterStore store;
  std::vector<KanLayer> layers{KanLayer::create(store, "a", 2, 3, options(-1, 1, 4, 3), rng),
                               KanLayer::create(store, "b", 3, 2, options(-1, 1, 4, 3), rng)};
  store[layers[1].coefficients].value.setZero();
  EXPECT_TRUE(kan_stack_forward(layers, store, Tensor::Random(4, 2)).isZero());
}

TEST(KanStack, WidthMismatchNamesLayer) {
  std::mt19937_64 rng(1);
  ParameterStore store;
  std::vector<KanLayer> layers{KanLayer::create(store, "a", 2, 3, options(-1, 1, 4, 3), rng),
                               KanLayer::create(store, "b", 4, 2, options(-1, 1, 4, 3), rng)};
  try {
    kan_stack_forward(layers, store, Tensor::Random(4, 2));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(KanStack, FitsSmoothFunction) {
  std::mt19937_64 rng(3);
  ParameterStore store;
  std::vector<KanLayer> layers{KanLayer::create(store, "a", 1, 4, options(-1, 1, 8, 3), rng),
                               KanLayer::create(store, "b", 4, 1, options(-2, 2, 8, 3), rng)};
  Tensor x(64, 1);
  Tensor y(64, 1);
  for (Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 63.0;
    y(i, 0) = std::sin(3 * x(i, 0)) + x(i, 0) * x(i, 0);
  }
  AdamState state = AdamState::for_parameters(store);
  for (int step = 0; step < 500; ++step) {
    ad::Tape tape;
    const auto bound = store.bind(tape);
    const ad::Var diff = kan_stack_forward(layers, bound, tape.constant(x)) - tape.constant(y);
    tape.backward(ad::mean(ad::cwise_product(diff, diff)));
    adam_step(store, store.gradients(tape, bound), state, 1e-2, 0.0);
  }
  const double mse = (kan_stack_forward(layers, store, x) - y).squaredNorm() / static_cast<double>(x.rows());
  EXPECT_LT(mse, 1e-2);
}

TEST(ExactFit, TwoByTwoExample) {
  const std::vector<int> target{2, 4, 1, 3};
  const Tensor c = kaa_exact_fit(2, target);
  EXPECT_EQ(c(1, 0), 2);
  EXPECT_EQ(c(0, 0), 4);
  EXPECT_EQ(c(1, 1), 1);
  EXPECT_EQ(c(0, 1), 3);
  const Vector s = bstar_kan_scores(c, build_circulant_P(2));
  EXPECT_EQ(s, (Vector(4) << 2, 4, 1, 3).finished());
}

TEST(ExactFit, IdentityTarget) {
  const std::vector<int> target{1, 2, 3, 4};
  EXPECT_EQ(bstar_kan_scores(kaa_exact_fit(2, target), build_circulant_P(2)),
            (Vector(4) << 1, 2, 3, 4).finished());
}

TEST(ExactFit, RandomPermutationsAreReproduced) {
  std::mt19937_64 rng(11);
  for (int d : {3, 4, 5}) {
    std::vector<int> target(static_cast<std::size_t>(d * d));
    std::iota(target.begin(), target.end(), 1);
    const Tensor P = build_circulant_P(d);
    for (int t = 0; t < 100; ++t) {
      std::shuffle(target.begin(), target.end(), rng);
      const Vector s = bstar_kan_scores(kaa_exact_fit(d, target), P);
      for (int j = 0; j < d * d; ++j) ASSERT_EQ(s(j), target[static_cast<std::size_t>(j)]);
    }
  }
}

TEST(ExactFit, RejectsNonPermutations) {
  EXPECT_THROW(kaa_exact_fit(2, std::vector<int>{1, 2, 2, 4}), ParameterError);
  EXPECT_THROW(kaa_exact_fit(2, std::vector<int>{0, 1, 2, 3}), ParameterError);
  EXPECT_THROW(kaa_exact_fit(2, std::vector<int>{1, 2, 3}), ParameterError);
}
