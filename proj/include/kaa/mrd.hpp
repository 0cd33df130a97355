#pragma once

// Maximum ranking distance (MRD) of scoring-function families on the
// circulant alignment matrix P, computed under the score-equals-rank
// relaxation: for a target ranking pi the family's best residual is
// min_theta ||s_theta(P) - pi^{-1}||, and the MRD is the max over pi.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kaa/autodiff.hpp"
#include "kaa/error.hpp"

namespace kaa {

/// N x d matrix with entry (j, k) = ((j + k - 2) mod N) + 1 (1-based), N = d^2.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> circulant_P(int d) {
  if (d < 2) throw ParameterError("circulant P needs d >= 2, got " + std::to_string(d));
  const int n = d * d;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p(n, d);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) p(j, k) = static_cast<Scalar>((j + k) % n + 1);
  }
  return p;
}

inline Tensor build_circulant_P(int d) { return circulant_P<double>(d); }

/// Importance ranking. perm[r] is the (1-based) node at rank r + 1 and
/// inverse[i] is the rank of node i + 1.
struct Ranking {
  std::vector<int> perm;
  std::vector<int> inverse;

  static Ranking from_perm(std::vector<int> perm);
  static Ranking from_inverse(std::vector<int> inverse);
  static Ranking identity(std::size_t n);
  std::size_t size() const { return perm.size(); }
  /// inverse as a real vector (the score-equals-rank target).
  Vector target() const;
  bool operator==(const Ranking&) const = default;
};

/// Stable ascending sort of scores; ties give the lower node index the lower rank.
Ranking importance_ranking(std::span<const double> scores);

double ranking_distance(const Ranking& a, const Ranking& b);

struct LeastSquares {
  double residual = 0.0;
  Vector w;
};

/// argmin_w ||P w - target|| through ridge-regularised normal equations.
LeastSquares ls_min_residual(const Tensor& P, const Vector& target);

/// N x N map t -> t - P (P^T P + ridge I)^{-1} P^T t.
Tensor residual_projector(const Tensor& P);

enum class MrdFamily { lt, mlp, kaa };
std::string to_string(MrdFamily f);
MrdFamily mrd_family_from_string(const std::string& name);

struct MrdOptions {
  /// Number of seeded random targets; unset means exhaustive enumeration.
  std::optional<std::size_t> sampled;
  std::uint64_t seed = 0;
  /// 0 reads KAA_WORKERS, falling back to the hardware concurrency.
  unsigned workers = 0;
};

struct MrdReport {
  MrdFamily family = MrdFamily::lt;
  int d = 0;
  Index n = 0;
  double oracle = 0.0;
  double lower_bound = 0.0;
  std::optional<double> upper_bound;
  std::string lower_bound_status;  // "closed form" or "analytic, unverified"
  Ranking witness;
  double elapsed_ms = 0.0;
  std::string mode;  // "exhaustive" or "sampled"
};

/// JSON document of a report. Pass include_timing = false for byte-stable output.
std::string to_json(const MrdReport& report, bool include_timing = true);

/// Worker count used by the enumerators.
unsigned worker_count(unsigned requested = 0);

/// Max over targets of ||R t|| for a fixed residual projector R, with the
/// lexicographically smallest maximiser as witness.
struct ResidualMax {
  double value = 0.0;
  std::vector<int> witness;  // target vector (rank of each row)
  std::size_t evaluated = 0;
};
ResidualMax max_residual_over_targets(const Tensor& projector, const MrdOptions& options);

/// Exhaustive (N <= 9) or sampled MRD of linear scoring s(x) = x w.
MrdReport mrd_bruteforce_lt(const Tensor& P, const MrdOptions& options = {});

/// Ranking-level MRD of linear scoring for d = 2, over every ordering that some
/// direction w induces (including tie orderings and w = 0).
double lt_rank_mrd_2d(const Tensor& P);
/// Distinct orderings on the open arcs between critical directions.
std::vector<Ranking> lt_generic_orderings_2d(const Tensor& P);
/// Every achievable ordering: arcs, critical directions and w = 0.
std::vector<Ranking> lt_achievable_orderings_2d(const Tensor& P);

double bound_lt(Index n, Index d);

struct MlpBounds {
  double lower = 0.0;
  double upper = 0.0;
};
MlpBounds bound_mlp(Index n, Index d);

/// Hidden representation ReLU(P W1) with W1 built from column operations on P,
/// followed by a least-squares output layer.
struct MlpConstruction {
  Tensor w1;       // d x d
  Tensor hidden;   // N x d
  Vector w2;       // d
  double residual = 0.0;
};
/// First-layer weights and hidden representation only (target independent).
MlpConstruction mlp_hidden_construction(const Tensor& P);
MlpConstruction mlp_upper_construction(const Tensor& P, const Ranking& target);
/// Max of the construction's residual over targets.
MrdReport mlp_construction_worst_case(const Tensor& P, const MrdOptions& options = {});

/// Max residual of the exact B*-spline KAN fit. Exhaustive unless sampled is set.
MrdReport kaa_mrd(const Tensor& P, const MrdOptions& options = {});

struct OrderingCheck {
  int d = 0;
  double kaa = 0.0;
  double mlp = 0.0;
  double lt = 0.0;
  bool ordered = false;
};
/// Computes (KAA, MLP construction, LT) and throws TheoremCheckFailure unless
/// the triple is non-decreasing. d must be 2 or 3.
OrderingCheck check_theorem1(int d, unsigned workers = 0);

}  // namespace kaa
