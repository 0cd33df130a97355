#pragma once

// Unified attention scoring s(h_i, h_j) = Psi(AF(h_i, h_j)).
//
// h_i is the central (destination) node and h_j the neighbor (source). Each
// backbone fixes the alignment function AF; the variant fixes the learnable
// score mapping Psi (linear forms of the original models, a two-layer MLP, or
// a KAN for Kolmogorov-Arnold attention).

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kaa/adam.hpp"
#include "kaa/kan.hpp"

namespace kaa {

enum class Backbone { gat, gat_modified, glcn, cfgat, gt, san };
enum class Variant { original, kaa, mlp };

/// concat: [h_i || h_j]; abs_diff: |h_i - h_j|; pair_cosine: both sides kept for a
/// cosine after mapping; key_only: h_j with the query folded into Psi;
/// key_scaled: key_only with the extra 1 / (gamma + 1) factor.
enum class AlignmentKind { concat, abs_diff, pair_cosine, key_only, key_scaled };

std::string to_string(Backbone b);
std::string to_string(Variant v);
Backbone backbone_from_string(const std::string& name);
Variant variant_from_string(const std::string& name);

AlignmentKind alignment_of(Backbone b);
/// Width of AF(h_i, h_j) for node width d.
Index alignment_width(AlignmentKind kind, Index d);

struct ScoringConfig {
  Backbone backbone = Backbone::gat;
  Variant variant = Variant::original;
  Index heads = 1;
  double gamma = 1.0;   // SAN only
  Index in_dim = 0;     // node representation width d
  Index proj_dim = 0;   // width after W / W_q / W_k or the cosine KAN; 0 means in_dim
  KanOptions kan;
  /// Hidden width of the KAN score mapping; 0 keeps the single-layer KAN.
  Index kan_hidden = 0;

  Index projected() const { return proj_dim > 0 ? proj_dim : in_dim; }
  /// Throws ParameterError for combinations outside the supported table.
  void validate() const;
};

/// Learnable part of one scoring head. Indices refer to a ParameterStore.
struct ScoreMapping {
  enum class Kind { linear, mlp, kan } kind = Kind::linear;
  std::optional<std::size_t> w;       // GAT / CFGAT projection, d x d'
  std::optional<std::size_t> a;       // attention vector, (2d' or d) x 1
  std::optional<std::size_t> w_q;     // GT / SAN, d x d'
  std::optional<std::size_t> w_k;
  std::optional<std::size_t> mlp_w1;  // d' x d'
  std::optional<std::size_t> mlp_w2;  // d' x 1
  std::vector<KanLayer> kan;
};

/// One attention head.
class Scorer {
 public:
  static Scorer create(const ScoringConfig& cfg, ParameterStore& store, const std::string& name,
                       std::mt19937_64& rng);

  const ScoringConfig& config() const { return cfg_; }
  const ScoreMapping& mapping() const { return mapping_; }
  /// Every store index owned by this head.
  std::vector<std::size_t> parameter_indices() const;

 private:
  ScoringConfig cfg_;
  ScoreMapping mapping_;
};

/// Raw per-edge scores, E x 1. Rows of h_src / h_dst are (neighbor, center) pairs.
ad::Var score_pairs(const Scorer& scorer, const std::vector<ad::Var>& bound, const ad::Var& h_src,
                    const ad::Var& h_dst);
/// Tape-free convenience.
Vector score_pairs(const Scorer& scorer, const ParameterStore& store, const Tensor& h_src,
                   const Tensor& h_dst);

/// Softmax of scores within destination segments.
ad::Var normalize(const ad::Var& scores, std::span<const Index> dst, Index num_nodes);
Vector normalize(const Vector& scores, std::span<const Index> dst, Index num_nodes);

/// K independent heads built from one configuration.
struct MultiHeadScorer {
  std::vector<Scorer> heads;

  static MultiHeadScorer create(const ScoringConfig& cfg, ParameterStore& store,
                                const std::string& name, std::mt19937_64& rng);
};

/// Attention weights of every head for the given edge list.
std::vector<ad::Var> multi_head(const MultiHeadScorer& scorer, const std::vector<ad::Var>& bound,
                                const ad::Var& h_src, const ad::Var& h_dst,
                                std::span<const Index> dst, Index num_nodes);

/// Fraction of freshly initialised parameterisations whose argmax key (lowest
/// index on ties) is the same for every query.
double static_attention_probe(const ScoringConfig& cfg, const Tensor& queries, const Tensor& keys,
                              int n_param_samples, std::uint64_t seed);

}  // namespace kaa
