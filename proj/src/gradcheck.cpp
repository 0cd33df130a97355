#include "kaa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kaa/attention.hpp"
#include "kaa/kan.hpp"

namespace kaa {

namespace {

double evaluate(const ScalarGraphFn& f, const Tensor& x) {
  ad::Tape tape;
  const ad::Var loss = f(tape, tape.constant(x));
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("finite_diff_check: function returned " + shape_string(loss.value()));
  }
  return loss.value()(0, 0);
}

}  // namespace

double finite_diff_check(const ScalarGraphFn& f, const Tensor& x, double h) {
  ad::Tape tape;
  const ad::Var xv = tape.parameter(x);
  const ad::Var loss = f(tape, xv);
  tape.backward(loss);
  const Tensor analytic = tape.grad(xv);

  double worst = 0.0;
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + h;
    const double up = evaluate(f, probe);
    probe(i) = orig - h;
    const double down = evaluate(f, probe);
    probe(i) = orig;
    const double central = (up - down) / (2.0 * h);
    const double a = analytic(i);
    worst = std::max(worst, std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Named cases

namespace {

constexpr double kKnotMargin = 0.1;  // fraction of a cell kept clear of knots

struct ScoreCase {
  Backbone backbone;
  Variant variant;
};

std::vector<ScoreCase> score_cases() {
  std::vector<ScoreCase> out;
  for (Backbone b : {Backbone::gat, Backbone::gat_modified, Backbone::glcn, Backbone::cfgat,
                     Backbone::gt, Backbone::san}) {
    for (Variant v : {Variant::original, Variant::kaa, Variant::mlp}) {
      ScoringConfig cfg;
      cfg.backbone = b;
      cfg.variant = v;
      cfg.in_dim = 1;
      try {
        cfg.validate();
      } catch (const ParameterError&) {
        continue;
      }
      out.push_back({b, v});
    }
  }
  return out;
}

bool clear_of_knots(double x, const BSplineGrid& grid) {
  const double u = (x - grid.range_min()) / grid.step();
  const double frac = u - std::floor(u);
  return x > grid.range_min() && x < grid.range_max() && frac > kKnotMargin && frac < 1.0 - kKnotMargin;
}

/// Draws a value inside a random grid cell, away from its knots.
double draw_interior(const BSplineGrid& grid, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cell(0, grid.grid_size() - 1);
  std::uniform_real_distribution<double> offset(2.0 * kKnotMargin, 1.0 - 2.0 * kKnotMargin);
  return grid.range_min() + (cell(rng) + offset(rng)) * grid.step();
}

Tensor random_tensor(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t(i) = n(rng);
  return t;
}

/// Central differences at two coarse steps agree, so no kink or jump lies nearby.
bool locally_smooth(const ScalarGraphFn& f, const Tensor& x) {
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    double c[2];
    const double steps[2] = {1e-3, 1e-4};
    for (int s = 0; s < 2; ++s) {
      const double orig = probe(i);
      probe(i) = orig + steps[s];
      const double up = evaluate(f, probe);
      probe(i) = orig - steps[s];
      const double down = evaluate(f, probe);
      probe(i) = orig;
      c[s] = (up - down) / (2.0 * steps[s]);
    }
    if (std::abs(c[0] - c[1]) > 1e-3 * (std::abs(c[0]) + std::abs(c[1])) + 1e-7) return false;
  }
  return true;
}

/// One differentiable variable plus the loss built around it.
struct Probe {
  ScalarGraphFn f;
  Tensor x;
};

GradcheckResult run_score_case(const std::string& name, const ScoreCase& sc, int points,
                               std::uint64_t seed) {
  constexpr Index kNodes = 4;
  constexpr Index kDim = 3;
  std::vector<Index> src, dst;
  for (Index i = 0; i < kNodes; ++i) {
    for (Index j = 0; j < kNodes; ++j) {
      if (i != j) {
        src.push_back(j);
        dst.push_back(i);
      }
    }
  }
  const auto e = static_cast<Index>(src.size());

  ScoringConfig cfg;
  cfg.backbone = sc.backbone;
  cfg.variant = sc.variant;
  cfg.in_dim = kDim;
  const BSplineGrid grid = cfg.kan.grid();

  GradcheckResult result{name, 0.0, 0, 0};
  std::mt19937_64 rng(seed);
  while (result.points < points) {
    if (result.rejected > 50 * points) {
      throw ContractError("gradient check '" + name + "' could not find points away from kinks");
    }
    ParameterStore store;
    const Scorer scorer = Scorer::create(cfg, store, "s", rng);
    Tensor features(kNodes, kDim);
    for (Index i = 0; i < features.size(); ++i) features(i) = draw_interior(grid, rng);
    if (sc.variant == Variant::kaa && alignment_of(sc.backbone) == AlignmentKind::abs_diff) {
      // The KAN sees |h_i - h_j|: redraw each node against the earlier ones
      // until every pairwise difference sits clear of the knots.
      for (Index c = 0; c < kDim; ++c) {
        for (Index i = 1; i < kNodes; ++i) {
          auto clear = [&] {
            for (Index j = 0; j < i; ++j) {
              if (!clear_of_knots(std::abs(features(i, c) - features(j, c)), grid)) return false;
            }
            return true;
          };
          int tries = 0;
          while (!clear()) {
            if (++tries > 1000) throw ContractError("gradient check '" + name + "' could not place features");
            features(i, c) = draw_interior(grid, rng);
          }
        }
      }
    }
    const Tensor r1 = random_tensor(e, 1, rng);
    const Tensor r2 = random_tensor(e, 1, rng);

    // Loss touches raw scores and normalised weights.
    auto loss = [&, r1, r2](ad::Tape& tape, const std::vector<ad::Var>& bound, const ad::Var& h) {
      const ad::Var s = score_pairs(scorer, bound, ad::gather_rows(h, src), ad::gather_rows(h, dst));
      const ad::Var alpha = normalize(s, dst, kNodes);
      return ad::sum(ad::cwise_product(alpha, tape.constant(r1))) +
             ad::sum(ad::cwise_product(s, tape.constant(r2)));
    };
    std::vector<Probe> probes;
    probes.push_back({[&, loss](ad::Tape& tape, const ad::Var& x) {
                        return loss(tape, store.bind(tape), x);
                      },
                      features});
    for (std::size_t p : scorer.parameter_indices()) {
      probes.push_back({[&, loss, p](ad::Tape& tape, const ad::Var& x) {
                          auto bound = store.bind(tape);
                          bound[p] = x;
                          return loss(tape, bound, tape.constant(features));
                        },
                        store[p].value});
    }
    bool smooth = true;
    for (const Probe& pr : probes) smooth = smooth && locally_smooth(pr.f, pr.x);
    if (!smooth) {
      ++result.rejected;
      continue;
    }
    for (const Probe& pr : probes) {
      result.max_rel_error = std::max(result.max_rel_error, finite_diff_check(pr.f, pr.x));
    }
    ++result.points;
  }
  return result;
}

GradcheckResult run_kan_case(const std::string& name, int order, int grid_size, int points,
                             std::uint64_t seed) {
  constexpr Index kBatch = 5;
  constexpr Index kIn = 3;
  constexpr Index kOut = 2;
  KanOptions opts;
  opts.order = order;
  opts.grid_size = grid_size;
  const BSplineGrid grid = opts.grid();

  GradcheckResult result{name, 0.0, 0, 0};
  std::mt19937_64 rng(seed);
  for (; result.points < points; ++result.points) {
    ParameterStore store;
    const KanLayer layer = KanLayer::create(store, "kan", kIn, kOut, opts, rng);
    store[layer.coefficients].value = random_tensor(kIn * layer.num_basis(), kOut, rng);
    Tensor x(kBatch, kIn);
    for (Index i = 0; i < x.size(); ++i) x(i) = draw_interior(grid, rng);
    const Tensor r = random_tensor(kBatch, kOut, rng);

    const ScalarGraphFn wrt_x = [&](ad::Tape& tape, const ad::Var& v) {
      return ad::sum(ad::cwise_product(kan_forward(layer, store.bind(tape), v), tape.constant(r)));
    };
    const ScalarGraphFn wrt_c = [&](ad::Tape& tape, const ad::Var& v) {
      auto bound = store.bind(tape);
      bound[layer.coefficients] = v;
      return ad::sum(ad::cwise_product(kan_forward(layer, bound, tape.constant(x)), tape.constant(r)));
    };
    result.max_rel_error = std::max({result.max_rel_error, finite_diff_check(wrt_x, x),
                                     finite_diff_check(wrt_c, store[layer.coefficients].value)});
  }
  return result;
}

}  // namespace

std::vector<std::string> gradcheck_cases() {
  std::vector<std::string> out;
  for (const ScoreCase& sc : score_cases()) {
    out.push_back("score/" + to_string(sc.backbone) + "/" + to_string(sc.variant));
  }
  for (int order = 0; order <= 3; ++order) {
    for (int g = 1; g <= 8; ++g) {
      out.push_back("kan/order" + std::to_string(order) + "/grid" + std::to_string(g));
    }
  }
  return out;
}

GradcheckResult run_gradcheck_case(const std::string& name, int points, std::uint64_t seed) {
  if (points < 1) throw ParameterError("gradient check needs at least one point");
  for (const ScoreCase& sc : score_cases()) {
    if (name == "score/" + to_string(sc.backbone) + "/" + to_string(sc.variant)) {
      return run_score_case(name, sc, points, seed);
    }
  }
  for (int order = 0; order <= 3; ++order) {
    for (int g = 1; g <= 8; ++g) {
      if (name == "kan/order" + std::to_string(order) + "/grid" + std::to_string(g)) {
        return run_kan_case(name, order, g, points, seed);
      }
    }
  }
  throw ParameterError("unknown gradient check '" + name + "'");
}

}  // namespace kaa
