#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kaa/autodiff.hpp"

namespace kaa {

/// Builds a scalar loss on `tape` from the differentiated input `x`.
using ScalarGraphFn = std::function<ad::Var(ad::Tape& tape, const ad::Var& x)>;

/// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12),
/// where the analytic gradient comes from the tape and the central difference
/// uses step h.
double finite_diff_check(const ScalarGraphFn& f, const Tensor& x, double h = 1e-5);

/// Named gradient checks: every scoring variant ("score/<backbone>/<variant>")
/// and KAN layers of orders 0-3 on grids 1-8 ("kan/order<k>/grid<G>").
std::vector<std::string> gradcheck_cases();

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  int points = 0;
  /// Candidate points discarded because they sat next to a kink or knot.
  int rejected = 0;
};

/// Worst finite_diff_check value over `points` random points, differentiating
/// with respect to the node features and every parameter tensor in turn.
GradcheckResult run_gradcheck_case(const std::string& name, int points = 20, std::uint64_t seed = 0);

}  // namespace kaa
