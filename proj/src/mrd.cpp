#include "kaa/mrd.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <Eigen/Cholesky>

#include "json.hpp"
#include "kaa/kan.hpp"

namespace kaa {

namespace {

constexpr double kRidge = 1e-12;
constexpr std::size_t kMaxExhaustiveN = 9;

void check_permutation(const std::vector<int>& v, const char* what) {
  std::vector<char> seen(v.size() + 1, 0);
  for (int x : v) {
    if (x < 1 || static_cast<std::size_t>(x) > v.size() || seen[static_cast<std::size_t>(x)]) {
      throw ParameterError(std::string(what) + " is not a permutation of 1.." +
                           std::to_string(v.size()));
    }
    seen[static_cast<std::size_t>(x)] = 1;
  }
}

std::vector<int> invert(const std::vector<int>& p) {
  std::vector<int> q(p.size());
  for (std::size_t r = 0; r < p.size(); ++r) q[static_cast<std::size_t>(p[r] - 1)] = static_cast<int>(r + 1);
  return q;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

int d_of(const Tensor& P) {
  const auto d = static_cast<int>(P.cols());
  if (d < 2 || P.rows() != static_cast<Index>(d) * d) {
    throw ParameterError("expected an N x d alignment matrix with N = d^2, got " + shape_string(P));
  }
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rankings

Ranking Ranking::from_perm(std::vector<int> perm) {
  check_permutation(perm, "perm");
  Ranking r;
  r.inverse = invert(perm);
  r.perm = std::move(perm);
  return r;
}

Ranking Ranking::from_inverse(std::vector<int> inverse) {
  check_permutation(inverse, "inverse");
  Ranking r;
  r.perm = invert(inverse);
  r.inverse = std::move(inverse);
  return r;
}

Ranking Ranking::identity(std::size_t n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 1);
  return from_perm(std::move(p));
}

Vector Ranking::target() const {
  Vector t(static_cast<Index>(inverse.size()));
  for (std::size_t i = 0; i < inverse.size(); ++i) t[static_cast<Index>(i)] = inverse[i];
  return t;
}

Ranking importance_ranking(std::span<const double> scores) {
  for (double s : scores) {
    if (std::isnan(s)) throw ParameterError("importance ranking of a NaN score");
  }
  std::vector<int> perm(scores.size());
  std::iota(perm.begin(), perm.end(), 1);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a - 1)] < scores[static_cast<std::size_t>(b - 1)];
  });
  return Ranking::from_perm(std::move(perm));
}

double ranking_distance(const Ranking& a, const Ranking& b) {
  if (a.size() != b.size()) {
    throw ParameterError("ranking distance of sizes " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a.inverse[i] - b.inverse[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Least squares

LeastSquares ls_min_residual(const Tensor& P, const Vector& target) {
  if (target.size() != P.rows()) {
    throw ShapeError("target of length " + std::to_string(target.size()) + " for " +
                     shape_string(P) + " matrix");
  }
  Tensor gram = P.transpose() * P;
  gram.diagonal().array() += kRidge;
  LeastSquares out;
  out.w = gram.ldlt().solve(P.transpose() * target);
  out.residual = (P * out.w - target).norm();
  return out;
}

Tensor residual_projector(const Tensor& P) {
  Tensor gram = P.transpose() * P;
  gram.diagonal().array() += kRidge;
  const Tensor hat = P * gram.ldlt().solve(P.transpose());
  return Tensor::Identity(P.rows(), P.rows()) - hat;
}

// ---------------------------------------------------------------------------
// Enumeration

std::string to_string(MrdFamily f) {
  switch (f) {
    case MrdFamily::lt: return "lt";
    case MrdFamily::mlp: return "mlp";
    case MrdFamily::kaa: return "kaa";
  }
  return "lt";
}

MrdFamily mrd_family_from_string(const std::string& name) {
  for (MrdFamily f : {MrdFamily::lt, MrdFamily::mlp, MrdFamily::kaa}) {
    if (to_string(f) == name) return f;
  }
  throw ParameterError("unknown MRD family '" + name + "'");
}

unsigned worker_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("KAA_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

/// Running maximum with the lexicographically smallest witness on ties.
struct Best {
  double value = -1.0;
  std::vector<int> witness;
  std::size_t evaluated = 0;

  void offer(double v, const std::vector<int>& t) {
    ++evaluated;
    if (v > value || (v == value && t < witness)) {
      value = v;
      witness = t;
    }
  }
  void merge(const Best& o) {
    evaluated += o.evaluated;
    if (o.witness.empty()) return;
    if (o.value > value || (o.value == value && o.witness < witness)) {
      value = o.value;
      witness = o.witness;
    }
  }
};

/// Runs `eval(target)` over every permutation of 1..n (chunked by first
/// element) or over `sampled` seeded shuffles, max-reducing the result.
template <typename Eval>
Best enumerate_targets(std::size_t n, const MrdOptions& options, Eval eval) {
  if (!options.sampled && n > kMaxExhaustiveN) {
    throw ParameterError("exhaustive enumeration is limited to N <= 9 (N = " + std::to_string(n) +
                         "); use sampled mode");
  }
  const unsigned workers = worker_count(options.workers);

  if (options.sampled) {
    const std::size_t count = *options.sampled;
    if (count == 0) throw ParameterError("sampled mode needs at least one sample");
    // Targets are drawn up front so the result does not depend on the worker count.
    std::mt19937_64 rng(options.seed);
    std::vector<std::vector<int>> targets(count, std::vector<int>(n));
    for (auto& t : targets) {
      std::iota(t.begin(), t.end(), 1);
      std::shuffle(t.begin(), t.end(), rng);
    }
    std::vector<Best> partial(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < count; i += workers) partial[w].offer(eval(targets[i]), targets[i]);
      });
    }
    for (auto& t : pool) t.join();
    Best best;
    for (const auto& p : partial) best.merge(p);
    return best;
  }

  std::vector<Best> chunks(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next++; c < n; c = next++) {
      std::vector<int> t(n);
      t[0] = static_cast<int>(c + 1);
      std::size_t k = 1;
      for (std::size_t v = 1; v <= n; ++v) {
        if (v != c + 1) t[k++] = static_cast<int>(v);
      }
      do {
        chunks[c].offer(eval(t), t);
      } while (std::next_permutation(t.begin() + 1, t.end()));
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < std::min<std::size_t>(workers, n); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  Best best;
  for (const auto& c : chunks) best.merge(c);
  return best;
}

double projected_norm(const Tensor& R, const std::vector<int>& t) {
  const Index n = R.rows();
  double s = 0.0;
  for (Index i = 0; i < n; ++i) {
    double r = 0.0;
    for (Index j = 0; j < n; ++j) r += R(i, j) * t[static_cast<std::size_t>(j)];
    s += r * r;
  }
  return std::sqrt(s);
}

}  // namespace

ResidualMax max_residual_over_targets(const Tensor& projector, const MrdOptions& options) {
  if (projector.rows() != projector.cols()) throw ShapeError("projector must be square");
  const Best best = enumerate_targets(static_cast<std::size_t>(projector.rows()), options,
                                      [&](const std::vector<int>& t) { return projected_norm(projector, t); });
  return {best.value, best.witness, best.evaluated};
}

MrdReport mrd_bruteforce_lt(const Tensor& P, const MrdOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = d_of(P);
  const ResidualMax m = max_residual_over_targets(residual_projector(P), options);
  MrdReport r;
  r.family = MrdFamily::lt;
  r.d = d;
  r.n = P.rows();
  r.oracle = m.value;
  r.lower_bound = bound_lt(r.n, d);
  r.lower_bound_status = "closed form";
  r.witness = Ranking::from_inverse(m.witness);
  r.mode = options.sampled ? "sampled" : "exhaustive";
  if (!options.sampled && r.oracle < r.lower_bound - 1e-9) {
    throw TheoremCheckFailure("linear MRD oracle " + std::to_string(r.oracle) +
                              " is below the closed-form lower bound " +
                              std::to_string(r.lower_bound));
  }
  r.elapsed_ms = elapsed_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Ranking-level MRD for d = 2

namespace {

void check_distinct_rows(const Tensor& P) {
  for (Index a = 0; a < P.rows(); ++a) {
    for (Index b = a + 1; b < P.rows(); ++b) {
      if (P.row(a) == P.row(b)) {
        throw DegenerateInputError("rows " + std::to_string(a + 1) + " and " +
                                   std::to_string(b + 1) + " of P coincide");
      }
    }
  }
}

struct Direction {
  double angle;
  Eigen::Vector2d w;
};

/// Directions perpendicular to pairwise row differences, sorted by angle.
std::vector<Direction> critical_directions(const Tensor& P) {
  std::vector<Direction> dirs;
  for (Index a = 0; a < P.rows(); ++a) {
    for (Index b = a + 1; b < P.rows(); ++b) {
      const Eigen::Vector2d v = (P.row(a) - P.row(b)).transpose();
      for (double sign : {1.0, -1.0}) {
        const Eigen::Vector2d w(-sign * v.y(), sign * v.x());
        dirs.push_back({std::atan2(w.y(), w.x()), w});
      }
    }
  }
  std::sort(dirs.begin(), dirs.end(), [](const Direction& x, const Direction& y) { return x.angle < y.angle; });
  std::vector<Direction> unique;
  for (const auto& dir : dirs) {
    if (unique.empty() || dir.angle - unique.back().angle > 1e-12) unique.push_back(dir);
  }
  return unique;
}

Ranking ordering_for(const Tensor& P, const Eigen::Vector2d& w) {
  const Vector s = P * w;
  return importance_ranking(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

void check_2d(const Tensor& P) {
  if (P.cols() != 2) throw ParameterError("ranking-level sweep needs d = 2, got " + shape_string(P));
  check_distinct_rows(P);
}

}  // namespace

std::vector<Ranking> lt_generic_orderings_2d(const Tensor& P) {
  check_2d(P);
  const auto dirs = critical_directions(P);
  std::set<std::vector<int>> seen;
  std::vector<Ranking> out;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const Direction& a = dirs[i];
    const Direction& b = dirs[(i + 1) % dirs.size()];
    Eigen::Vector2d mid = a.w.normalized() + b.w.normalized();
    if (mid.norm() < 1e-9) mid = Eigen::Vector2d(-a.w.y(), a.w.x());  // arc of length pi
    Ranking r = ordering_for(P, mid);
    if (seen.insert(r.perm).second) out.push_back(std::move(r));
  }
  return out;
}

std::vector<Ranking> lt_achievable_orderings_2d(const Tensor& P) {
  std::vector<Ranking> out = lt_generic_orderings_2d(P);
  std::set<std::vector<int>> seen;
  for (const auto& r : out) seen.insert(r.perm);
  auto add = [&](Ranking r) {
    if (seen.insert(r.perm).second) out.push_back(std::move(r));
  };
  for (const auto& dir : critical_directions(P)) add(ordering_for(P, dir.w));
  add(Ranking::identity(static_cast<std::size_t>(P.rows())));  // w = 0
  return out;
}

double lt_rank_mrd_2d(const Tensor& P) {
  const auto achievable = lt_achievable_orderings_2d(P);
  const auto n = static_cast<std::size_t>(P.rows());
  if (n > kMaxExhaustiveN) throw ParameterError("ranking-level sweep is limited to N <= 9");
  std::vector<int> target(n);
  std::iota(target.begin(), target.end(), 1);
  double worst = 0.0;
  do {
    const Ranking pi = Ranking::from_perm(target);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& sigma : achievable) best = std::min(best, ranking_distance(sigma, pi));
    worst = std::max(worst, best);
  } while (std::next_permutation(target.begin(), target.end()));
  return worst;
}

// ---------------------------------------------------------------------------
// Closed-form bounds

namespace {

void check_square_size(Index n, Index d) {
  if (d < 1 || n != d * d) {
    throw ParameterError("bounds assume N = d^2, got N = " + std::to_string(n) +
                         ", d = " + std::to_string(d));
  }
}

double lambda_of(double d) { return d * d * d - 3.0 * d * d + 2.0 * d; }

}  // namespace

double bound_lt(Index n, Index d) {
  check_square_size(n, d);
  const double N = static_cast<double>(n);
  return std::sqrt((N * N * N - N - lambda_of(static_cast<double>(d))) / 12.0);
}

MlpBounds bound_mlp(Index n, Index d) {
  check_square_size(n, d);
  if (n <= d) throw ParameterError("MLP bounds need N > d");
  const double N = static_cast<double>(n);
  const double m = static_cast<double>(n - d);
  const double lambda = lambda_of(static_cast<double>(d));
  return {std::sqrt((m * m * m - m - lambda) / 12.0), std::sqrt((N * N * N - N - lambda) / 12.0)};
}

// ---------------------------------------------------------------------------
// MLP construction

MlpConstruction mlp_hidden_construction(const Tensor& P) {
  const int d = d_of(P);
  const Index n = P.rows();
  // Column differences, then second differences scaled by 1/N.
  Tensor d1 = Tensor::Identity(d, d);
  Tensor d2 = Tensor::Identity(d, d);
  for (int k = 1; k < d; ++k) d1(k - 1, k) = -1.0;
  for (int k = 2; k < d; ++k) {
    d2(k, k) = 1.0 / static_cast<double>(n);
    d2(k - 1, k) = -1.0 / static_cast<double>(n);
  }
  // Keep columns 2..d and append the negated last column.
  Tensor s = Tensor::Zero(d, d);
  for (int k = 1; k < d; ++k) s(k, k - 1) = 1.0;
  s(d - 1, d - 1) = -1.0;

  MlpConstruction c;
  c.w1 = d1 * d2 * s;
  c.hidden = (P * c.w1).cwiseMax(0.0);

  const Index top = n + 1 - d;
  Tensor expected_top = Tensor::Zero(top, d);
  expected_top.col(0).setOnes();
  if ((c.hidden.topRows(top) - expected_top).cwiseAbs().maxCoeff() > 1e-9) {
    throw ConstructionError("hidden representation does not have constant leading rows");
  }
  const Tensor m = c.hidden.bottomRightCorner(d - 1, d - 1);
  Eigen::FullPivLU<Tensor> lu(m);
  if (lu.rank() != d - 1) throw ConstructionError("trailing hidden block is rank deficient");
  return c;
}

MlpConstruction mlp_upper_construction(const Tensor& P, const Ranking& target) {
  if (static_cast<Index>(target.size()) != P.rows()) {
    throw ShapeError("target ranking of size " + std::to_string(target.size()) + " for " +
                     shape_string(P) + " matrix");
  }
  MlpConstruction c = mlp_hidden_construction(P);
  const LeastSquares ls = ls_min_residual(c.hidden, target.target());
  c.w2 = ls.w;
  c.residual = ls.residual;
  const double upper = bound_mlp(P.rows(), P.cols()).upper;
  if (c.residual > upper + 1e-9) {
    throw TheoremCheckFailure("MLP construction residual " + std::to_string(c.residual) +
                              " exceeds the upper bound " + std::to_string(upper));
  }
  return c;
}

MrdReport mlp_construction_worst_case(const Tensor& P, const MrdOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const MlpConstruction c = mlp_hidden_construction(P);
  const ResidualMax m = max_residual_over_targets(residual_projector(c.hidden), options);
  const MlpBounds b = bound_mlp(P.rows(), P.cols());
  MrdReport r;
  r.family = MrdFamily::mlp;
  r.d = static_cast<int>(P.cols());
  r.n = P.rows();
  r.oracle = m.value;
  r.lower_bound = b.lower;
  r.upper_bound = b.upper;
  r.lower_bound_status = "analytic, unverified";
  r.witness = Ranking::from_inverse(m.witness);
  r.mode = options.sampled ? "sampled" : "exhaustive";
  if (r.oracle > b.upper + 1e-9) {
    throw TheoremCheckFailure("MLP construction worst case " + std::to_string(r.oracle) +
                              " exceeds the upper bound " + std::to_string(b.upper));
  }
  r.elapsed_ms = elapsed_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// KAA

MrdReport kaa_mrd(const Tensor& P, const MrdOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = d_of(P);
  const Best best = enumerate_targets(static_cast<std::size_t>(P.rows()), options,
                                      [&](const std::vector<int>& t) {
                                        const Tensor c = kaa_exact_fit(d, t);
                                        const Vector s = bstar_kan_scores(c, P);
                                        double r = 0.0;
                                        for (Index j = 0; j < s.size(); ++j) {
                                          const double e = s[j] - t[static_cast<std::size_t>(j)];
                                          r += e * e;
                                        }
                                        return std::sqrt(r);
                                      });
  MrdReport r;
  r.family = MrdFamily::kaa;
  r.d = d;
  r.n = P.rows();
  r.oracle = best.value;
  r.lower_bound = 0.0;
  r.lower_bound_status = "closed form";
  r.witness = Ranking::from_inverse(best.witness);
  r.mode = options.sampled ? "sampled" : "exhaustive";
  r.elapsed_ms = elapsed_since(t0);
  return r;
}

OrderingCheck check_theorem1(int d, unsigned workers) {
  if (d != 2 && d != 3) throw ParameterError("ordering check supports d = 2 or 3");
  const Tensor P = build_circulant_P(d);
  MrdOptions exhaustive;
  exhaustive.workers = workers;
  MrdOptions kaa_opts = exhaustive;
  if (d == 3) kaa_opts.sampled = 1000;

  OrderingCheck out;
  out.d = d;
  out.kaa = kaa_mrd(P, kaa_opts).oracle;
  out.mlp = mlp_construction_worst_case(P, exhaustive).oracle;
  out.lt = mrd_bruteforce_lt(P, exhaustive).oracle;
  out.ordered = out.kaa <= out.mlp + 1e-9 && out.mlp <= out.lt + 1e-9;
  if (!out.ordered) {
    throw TheoremCheckFailure("ordering violated at d = " + std::to_string(d) + ": kaa " +
                              std::to_string(out.kaa) + ", mlp " + std::to_string(out.mlp) +
                              ", lt " + std::to_string(out.lt));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_json(const MrdReport& report, bool include_timing) {
  nlohmann::ordered_json j;
  j["family"] = to_string(report.family);
  j["d"] = report.d;
  j["N"] = report.n;
  j["oracle"] = report.oracle;
  j["lower_bound"] = report.lower_bound;
  j["lower_bound_status"] = report.lower_bound_status;
  j["upper_bound"] = report.upper_bound ? nlohmann::ordered_json(*report.upper_bound) : nlohmann::ordered_json(nullptr);
  j["witness"] = report.witness.inverse;
  if (include_timing) j["elapsed_ms"] = report.elapsed_ms;
  j["mode"] = report.mode;
  return j.dump(2);
}

}  // namespace kaa
