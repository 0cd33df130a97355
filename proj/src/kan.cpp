#include "kaa/kan.hpp"

#include <cmath>

namespace kaa {

BSplineGrid KanOptions::grid() const {
  return normalize_inputs ? BSplineGrid(-1.0, 1.0, grid_size, order)
                          : BSplineGrid(range_min, range_max, grid_size, order);
}

KanLayer KanLayer::create(ParameterStore& store, const std::string& name, Index n_in, Index n_out,
                          const KanOptions& options, std::mt19937_64& rng) {
  if (n_in < 1 || n_out < 1) throw ParameterError("KAN layer widths must be positive");
  KanLayer layer;
  layer.n_in = n_in;
  layer.n_out = n_out;
  layer.options = options;
  (void)options.grid();  // validates the grid
  const double bound = 0.1 / std::sqrt(static_cast<double>(n_in));
  std::uniform_real_distribution<double> init(-bound, bound);
  Tensor c(n_in * layer.num_basis(), n_out);
  for (Index i = 0; i < c.size(); ++i) c(i) = init(rng);
  layer.coefficients = store.add(name + ".coef", std::move(c));
  if (options.residual) {
    Tensor w(n_in, n_out);
    for (Index i = 0; i < w.size(); ++i) w(i) = init(rng);
    layer.residual_weight = store.add(name + ".residual", std::move(w));
  }
  return layer;
}

ad::Var kan_forward(const KanLayer& layer, const std::vector<ad::Var>& bound, const ad::Var& x) {
  if (x.cols() != layer.n_in) {
    throw ShapeError("KAN layer expects width " + std::to_string(layer.n_in) + ", got " +
                     shape_string(x.value()));
  }
  const ad::Var input = layer.options.normalize_inputs ? ad::tanh(x) : x;
  const ad::Var basis = ad::bspline_expand(input, layer.options.grid());
  ad::Var out = basis * bound.at(layer.coefficients);
  if (layer.residual_weight) out = out + ad::silu(input) * bound.at(*layer.residual_weight);
  return out;
}

Tensor kan_forward(const KanLayer& layer, const ParameterStore& store, const Tensor& x) {
  ad::Tape tape;
  const auto bound = store.bind(tape);
  return kan_forward(layer, bound, tape.constant(x)).value();
}

ad::Var kan_stack_forward(std::span<const KanLayer> layers, const std::vector<ad::Var>& bound,
                          const ad::Var& x) {
  if (layers.empty()) throw ShapeError("KAN stack has no layers");
  ad::Var h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (h.cols() != layers[l].n_in) {
      throw ShapeError("KAN stack layer " + std::to_string(l) + " expects width " +
                       std::to_string(layers[l].n_in) + ", got " + std::to_string(h.cols()));
    }
    h = kan_forward(layers[l], bound, h);
  }
  return h;
}

Tensor kan_stack_forward(std::span<const KanLayer> layers, const ParameterStore& store,
                         const Tensor& x) {
  ad::Tape tape;
  const auto bound = store.bind(tape);
  return kan_stack_forward(layers, bound, tape.constant(x)).value();
}

Vector bstar_kan_scores(const Tensor& coefficients, const Tensor& inputs) {
  const Index d = coefficients.rows();
  if (coefficients.cols() != d || inputs.cols() != d) {
    throw ShapeError("B* scoring needs d x d coefficients and N x d inputs, got " +
                     shape_string(coefficients) + " and " + shape_string(inputs));
  }
  Vector s = Vector::Zero(inputs.rows());
  for (Index j = 0; j < inputs.rows(); ++j) {
    for (Index k = 0; k < d; ++k) {
      for (Index l = 0; l < d; ++l) {
        s[j] += coefficients(k, l) *
                bstar_eval(static_cast<int>(l + 1), static_cast<int>(d), inputs(j, k));
      }
    }
  }
  return s;
}

Tensor kaa_exact_fit(int d, std::span<const int> target_ranks) {
  if (d < 1) throw ParameterError("exact fit needs d >= 1");
  const auto n = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
  if (target_ranks.size() != n) {
    throw ParameterError("exact fit needs " + std::to_string(n) + " target ranks, got " +
                         std::to_string(target_ranks.size()));
  }
  std::vector<char> seen(n + 1, 0);
  for (int r : target_ranks) {
    if (r < 1 || static_cast<std::size_t>(r) > n || seen[static_cast<std::size_t>(r)]) {
      throw ParameterError("target ranks are not a permutation of 1.." + std::to_string(n));
    }
    seen[static_cast<std::size_t>(r)] = 1;
  }
  Tensor c = Tensor::Zero(d, d);
  for (int alpha = 0; alpha < d; ++alpha) {
    for (int beta = 0; beta < d; ++beta) {
      // c_{d-beta, alpha+1} in 1-based indexing.
      c(d - beta - 1, alpha) = target_ranks[static_cast<std::size_t>(alpha * d + beta)];
    }
  }
  return c;
}

}  // namespace kaa
