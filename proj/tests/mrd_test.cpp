#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kaa/kan.hpp"
#include "kaa/mrd.hpp"

using namespace kaa;

namespace {

std::vector<int> random_perm(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 1);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Vector as_vector(const std::vector<int>& v) {
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
  return out;
}

double qr_residual(const Tensor& P, const Vector& t) {
  const Vector w = P.householderQr().solve(t);
  return (P * w - t).norm();
}

// Largest spread sum((x - mean)^2) over m-element subsets of 1..n, by enumeration.
double max_subset_deviation(int n, int m) {
  double best = 0.0;
  std::vector<bool> pick(static_cast<std::size_t>(n), false);
  std::fill(pick.begin(), pick.begin() + m, true);
  do {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      if (pick[static_cast<std::size_t>(i)]) {
        sum += i + 1;
        sq += (i + 1.0) * (i + 1.0);
      }
    }
    best = std::max(best, sq - sum * sum / m);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return std::sqrt(best);
}

}  // namespace

TEST(CirculantP, SmallCases) {
  Tensor want(4, 2);
  want << 1, 2, 2, 3, 3, 4, 4, 1;
  EXPECT_EQ(build_circulant_P(2), want);
  const Tensor p3 = build_circulant_P(3);
  EXPECT_EQ(p3.rows(), 9);
  EXPECT_EQ(p3.row(8), (Eigen::RowVector3d(9, 1, 2)));
  EXPECT_THROW(build_circulant_P(1), ParameterError);
}

TEST(CirculantP, OneMultipleOfDPerRow) {
  for (int d = 2; d <= 8; ++d) {
    const Tensor p = build_circulant_P(d);
    for (Index j = 0; j < p.rows(); ++j) {
      int multiples = 0;
      for (Index k = 0; k < d; ++k) multiples += static_cast<int>(p(j, k)) % d == 0;
      EXPECT_EQ(multiples, 1) << "d=" << d << " row " << j;
    }
  }
}

TEST(Ranking, Examples) {
  const std::vector<double> s{3.0, 1.0, 2.0};
  EXPECT_EQ(importance_ranking(s).inverse, (std::vector<int>{3, 1, 2}));
  EXPECT_EQ(importance_ranking(s).perm, (std::vector<int>{2, 3, 1}));
  const std::vector<double> flat(5, 0.3);
  EXPECT_EQ(importance_ranking(flat), Ranking::identity(5));
  const std::vector<double> up{-1.0, 0.0, 4.0, 9.0};
  EXPECT_EQ(importance_ranking(up), Ranking::identity(4));
  const std::vector<double> bad{1.0, std::nan("")};
  EXPECT_THROW(importance_ranking(bad), ParameterError);
}

TEST(Ranking, PermAndInverseAgree) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const Ranking r = Ranking::from_perm(random_perm(7, rng));
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(r.inverse[static_cast<std::size_t>(r.perm[i] - 1)], static_cast<int>(i) + 1);
    }
    EXPECT_EQ(Ranking::from_inverse(r.inverse), r);
  }
  EXPECT_THROW(Ranking::from_perm({1, 1, 3}), ParameterError);
}

TEST(RankingDistance, Examples) {
  const Ranking id = Ranking::identity(3);
  EXPECT_EQ(ranking_distance(id, id), 0.0);
  EXPECT_DOUBLE_EQ(ranking_distance(id, Ranking::from_perm({3, 2, 1})), std::sqrt(8.0));
  EXPECT_DOUBLE_EQ(ranking_distance(Ranking::identity(4), Ranking::from_perm({4, 3, 2, 1})), std::sqrt(20.0));
  EXPECT_THROW(ranking_distance(id, Ranking::identity(4)), ParameterError);
}

TEST(RankingDistance, MetricAxioms) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const Ranking a = Ranking::from_perm(random_perm(6, rng));
    const Ranking b = Ranking::from_perm(random_perm(6, rng));
    const Ranking c = Ranking::from_perm(random_perm(6, rng));
    const double ab = ranking_distance(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(ab, ranking_distance(b, a));
    EXPECT_EQ(ab == 0.0, a == b);
    EXPECT_LE(ranking_distance(a, c), ab + ranking_distance(b, c) + 1e-12);
  }
}

TEST(LeastSquares, ColumnSpaceAndOrthogonalTargets) {
  const Tensor P = build_circulant_P(3);
  const Vector in_span = P * Eigen::Vector3d(0.5, -2.0, 1.0);
  EXPECT_LT(ls_min_residual(P, in_span).residual, 1e-9);
  // A random vector with its column-space part removed.
  const Vector r = Vector::Random(9);
  const Vector o = r - P * P.householderQr().solve(r);
  EXPECT_NEAR(ls_min_residual(P, o).residual, o.norm(), 1e-9);
}

TEST(LeastSquares, MatchesQrOnRandomTargets) {
  std::mt19937_64 rng(3);
  for (int d : {2, 3, 4}) {
    const Tensor P = build_circulant_P(d);
    for (int t = 0; t < 100; ++t) {
      const Vector target = as_vector(random_perm(d * d, rng));
      const LeastSquares ls = ls_min_residual(P, target);
      EXPECT_NEAR(ls.residual, qr_residual(P, target), 1e-9);
      EXPECT_NEAR((P * ls.w - target).norm(), ls.residual, 1e-9);
      EXPECT_NEAR((residual_projector(P) * target).norm(), ls.residual, 1e-9);
    }
  }
}

// The columns of P do not span the constant vector, so centring is not always
// available: the fit is bounded by the zero fit, and an explicit intercept
// column restores the centred bound.
TEST(LeastSquares, BoundedByZeroFitAndCentringWithIntercept) {
  std::mt19937_64 rng(4);
  bool exceeds_centred = false;
  for (int d : {2, 3}) {
    const Tensor P = build_circulant_P(d);
    Tensor with_ones(P.rows(), P.cols() + 1);
    with_ones << P, Vector::Ones(P.rows());
    for (int t = 0; t < 200; ++t) {
      const Vector target = as_vector(random_perm(d * d, rng));
      const double centred = (target.array() - target.mean()).matrix().norm();
      const double res = ls_min_residual(P, target).residual;
      EXPECT_LE(res, target.norm() + 1e-9);
      EXPECT_LE(ls_min_residual(with_ones, target).residual, centred + 1e-9);
      exceeds_centred = exceeds_centred || res > centred + 1e-9;
    }
  }
  EXPECT_TRUE(exceeds_centred);
}

TEST(Bounds, ClosedForms) {
  EXPECT_NEAR(bound_lt(4, 2), std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(bound_lt(9, 3), std::sqrt(59.5), 1e-15);
  EXPECT_NEAR(bound_lt(4, 2), 2.23607, 5e-6);
  EXPECT_NEAR(bound_lt(9, 3), 7.71362, 5e-6);
  const MlpBounds b2 = bound_mlp(4, 2), b3 = bound_mlp(9, 3);
  EXPECT_NEAR(b2.lower, std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(b2.upper, std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(b3.lower, std::sqrt(17.0), 1e-15);
  EXPECT_NEAR(b3.upper, std::sqrt(59.5), 1e-15);
  EXPECT_THROW(bound_lt(5, 2), ParameterError);
  EXPECT_THROW(bound_mlp(8, 3), ParameterError);
}

TEST(Bounds, MlpUpperEqualsLinearBoundAndGrows) {
  double previous = 0.0;
  for (Index d = 2; d <= 8; ++d) {
    EXPECT_EQ(bound_mlp(d * d, d).upper, bound_lt(d * d, d));
    EXPECT_GT(bound_lt(d * d, d), previous);
    previous = bound_lt(d * d, d);
  }
}

TEST(MlpConstruction, HiddenStructure) {
  for (int d : {2, 3, 4}) {
    const Tensor P = build_circulant_P(d);
    const MlpConstruction c = mlp_hidden_construction(P);
    const Index n = P.rows(), top = n + 1 - d;
    EXPECT_TRUE(c.hidden.isApprox((P * c.w1).cwiseMax(0.0)));
    for (Index j = 0; j < top; ++j) {
      EXPECT_EQ(c.hidden(j, 0), 1.0);
      EXPECT_TRUE(c.hidden.row(j).tail(d - 1).isZero());
    }
    const Tensor block = c.hidden.bottomRightCorner(d - 1, d - 1);
    EXPECT_EQ(Eigen::FullPivLU<Tensor>(block).rank(), d - 1);
  }
}

TEST(MlpConstruction, FitsBottomRowsAndAveragesTop) {
  std::mt19937_64 rng(5);
  const int d = 3;
  const Tensor P = build_circulant_P(d);
  for (int t = 0; t < 30; ++t) {
    const Ranking target = Ranking::from_inverse(random_perm(9, rng));
    const MlpConstruction c = mlp_upper_construction(P, target);
    const Vector fitted = c.hidden * c.w2;
    const Vector goal = target.target();
    EXPECT_LT((fitted.tail(d - 1) - goal.tail(d - 1)).cwiseAbs().maxCoeff(), 1e-9);
    const double top_mean = goal.head(9 + 1 - d).mean();
    EXPECT_LT((fitted.head(9 + 1 - d).array() - top_mean).abs().maxCoeff(), 1e-9);
    EXPECT_NEAR(c.residual, (fitted - goal).norm(), 1e-9);
  }
}

TEST(MlpConstruction, WorstCaseMatchesSubsetOracle) {
  for (int d : {2, 3}) {
    const MrdReport r = mlp_construction_worst_case(build_circulant_P(d));
    const int n = d * d;
    EXPECT_NEAR(r.oracle, max_subset_deviation(n, n + 1 - d), 1e-9);
    EXPECT_LE(r.oracle, bound_mlp(n, d).upper + 1e-9);
    EXPECT_EQ(r.lower_bound_status, "analytic, unverified");
    ASSERT_TRUE(r.upper_bound.has_value());
    EXPECT_EQ(*r.upper_bound, bound_mlp(n, d).upper);
  }
  EXPECT_NEAR(mlp_construction_worst_case(build_circulant_P(2)).oracle, std::sqrt(42.0 / 9.0), 1e-9);
  EXPECT_NEAR(mlp_construction_worst_case(build_circulant_P(3)).oracle, 7.67184, 5e-6);
}

TEST(LinearMrd, ExhaustiveMeetsBounds) {
  const MrdReport r2 = mrd_bruteforce_lt(build_circulant_P(2));
  EXPECT_GE(r2.oracle, std::sqrt(5.0) - 1e-9);
  EXPECT_EQ(r2.mode, "exhaustive");
  const MrdReport r3 = mrd_bruteforce_lt(build_circulant_P(3));
  EXPECT_GE(r3.oracle, std::sqrt(59.5) - 1e-9);
  // The witness reproduces the reported value.
  for (const MrdReport* r : {&r2, &r3}) {
    const Tensor P = build_circulant_P(r->d);
    EXPECT_NEAR(ls_min_residual(P, r->witness.target()).residual, r->oracle, 1e-9);
  }
}

TEST(LinearMrd, ExhaustiveMatchesDirectEnumeration) {
  const Tensor P = build_circulant_P(2);
  std::vector<int> t{1, 2, 3, 4};
  double best = 0.0;
  do {
    best = std::max(best, qr_residual(P, as_vector(t)));
  } while (std::next_permutation(t.begin(), t.end()));
  EXPECT_NEAR(mrd_bruteforce_lt(P).oracle, best, 1e-9);
}

TEST(LinearMrd, WorkerCountDoesNotChangeResult) {
  const Tensor P = build_circulant_P(2);
  MrdOptions one, four;
  one.workers = 1;
  four.workers = 4;
  const MrdReport a = mrd_bruteforce_lt(P, one), b = mrd_bruteforce_lt(P, four);
  EXPECT_EQ(a.oracle, b.oracle);
  EXPECT_EQ(a.witness, b.witness);
}

TEST(LinearMrd, LargeDRequiresSampling) {
  const Tensor P = build_circulant_P(4);
  EXPECT_THROW(mrd_bruteforce_lt(P), ParameterError);
  MrdOptions o;
  o.sampled = 200;
  o.seed = 3;
  const MrdReport r = mrd_bruteforce_lt(P, o);
  EXPECT_EQ(r.mode, "sampled");
  EXPECT_NEAR(ls_min_residual(P, r.witness.target()).residual, r.oracle, 1e-9);
  EXPECT_EQ(mrd_bruteforce_lt(P, o).oracle, r.oracle);
}

TEST(RankMrd2d, SweepProperties) {
  const Tensor P = build_circulant_P(2);
  const auto generic = lt_generic_orderings_2d(P);
  EXPECT_LE(generic.size(), 12u);
  const auto all = lt_achievable_orderings_2d(P);
  EXPECT_GE(all.size(), generic.size());
  // w = (1, 0) scores the rows (1, 2, 3, 4).
  const std::vector<double> col0{1, 2, 3, 4};
  EXPECT_NE(std::find(all.begin(), all.end(), importance_ranking(col0)), all.end());
  // Every ordering from a random direction is among the generic ones.
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss;
  for (int t = 0; t < 200; ++t) {
    const Eigen::Vector2d w(gauss(rng), gauss(rng));
    const Vector s = P * w;
    const Ranking r = importance_ranking(std::vector<double>(s.data(), s.data() + s.size()));
    EXPECT_NE(std::find(generic.begin(), generic.end(), r), generic.end());
  }
  const double v = lt_rank_mrd_2d(P);
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, std::sqrt(20.0));
}

TEST(RankMrd2d, DuplicateRowsAreDegenerate) {
  Tensor P(3, 2);
  P << 1, 2, 1, 2, 3, 4;
  EXPECT_THROW(lt_rank_mrd_2d(P), DegenerateInputError);
}

TEST(KaaMrd, ExactFitHasZeroResidual) {
  const MrdReport r2 = kaa_mrd(build_circulant_P(2));
  EXPECT_LE(r2.oracle, 1e-12);
  EXPECT_EQ(r2.mode, "exhaustive");
  for (int d : {3, 4}) {
    MrdOptions o;
    o.sampled = 1000;
    const MrdReport r = kaa_mrd(build_circulant_P(d), o);
    EXPECT_LE(r.oracle, 1e-12);
  }
}

TEST(KaaMrd, ParameterCountIsDSquared) {
  std::mt19937_64 rng(7);
  for (int d = 2; d <= 5; ++d) {
    EXPECT_EQ(kaa_exact_fit(d, random_perm(d * d, rng)).size(), d * d);
  }
}

TEST(TheoremCheck, OrderingHoldsForSmallD) {
  for (int d : {2, 3}) {
    const OrderingCheck c = check_theorem1(d);
    EXPECT_TRUE(c.ordered);
    EXPECT_LE(c.kaa, 1e-9);
    EXPECT_LE(c.kaa, c.mlp);
    EXPECT_LE(c.mlp, c.lt);
    EXPECT_GE(c.lt, bound_lt(d * d, d) - 1e-9);
  }
  EXPECT_THROW(check_theorem1(4), ParameterError);
}

TEST(Report, JsonWithoutTimingIsStable) {
  MrdOptions o;
  o.workers = 1;
  const std::string a = to_json(mrd_bruteforce_lt(build_circulant_P(2), o), false);
  const std::string b = to_json(mrd_bruteforce_lt(build_circulant_P(2), o), false);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.find("elapsed_ms"), std::string::npos);
  EXPECT_NE(to_json(mrd_bruteforce_lt(build_circulant_P(2), o)).find("elapsed_ms"), std::string::npos);
  EXPECT_EQ(mrd_family_from_string(to_string(MrdFamily::kaa)), MrdFamily::kaa);
  EXPECT_THROW(mrd_family_from_string("gnn"), ParameterError);
}
