#include "kaa/attention.hpp"

#include <cmath>

namespace kaa {

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::gat: return "gat";
    case Backbone::gat_modified: return "gat_modified";
    case Backbone::glcn: return "glcn";
    case Backbone::cfgat: return "cfgat";
    case Backbone::gt: return "gt";
    case Backbone::san: return "san";
  }
  return "gat";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::kaa: return "kaa";
    case Variant::mlp: return "mlp";
  }
  return "original";
}

Backbone backbone_from_string(const std::string& name) {
  for (Backbone b : {Backbone::gat, Backbone::gat_modified, Backbone::glcn, Backbone::cfgat,
                     Backbone::gt, Backbone::san}) {
    if (to_string(b) == name) return b;
  }
  throw ParameterError("unknown backbone '" + name + "'");
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : {Variant::original, Variant::kaa, Variant::mlp}) {
    if (to_string(v) == name) return v;
  }
  throw ParameterError("unknown variant '" + name + "'");
}

AlignmentKind alignment_of(Backbone b) {
  switch (b) {
    case Backbone::gat:
    case Backbone::gat_modified: return AlignmentKind::concat;
    case Backbone::glcn: return AlignmentKind::abs_diff;
    case Backbone::cfgat: return AlignmentKind::pair_cosine;
    case Backbone::gt: return AlignmentKind::key_only;
    case Backbone::san: return AlignmentKind::key_scaled;
  }
  return AlignmentKind::concat;
}

Index alignment_width(AlignmentKind kind, Index d) {
  return kind == AlignmentKind::concat ? 2 * d : d;
}

void ScoringConfig::validate() const {
  if (in_dim < 1) throw ParameterError("scoring input width must be positive");
  if (heads < 1) throw ParameterError("number of heads must be at least 1");
  if (proj_dim < 0) throw ParameterError("projection width must be non-negative");
  if (kan_hidden < 0) throw ParameterError("KAN hidden width must be non-negative");
  if (backbone == Backbone::san && !(gamma > -1.0)) {
    throw ParameterError("SAN gamma must exceed -1");
  }
  if (backbone == Backbone::gat_modified && variant != Variant::original) {
    throw ParameterError("the modified GAT score only exists in its original form");
  }
  if (variant == Variant::mlp && backbone != Backbone::gat && backbone != Backbone::glcn) {
    throw ParameterError("MLP score mapping is defined for scalar-output backbones (gat, glcn)");
  }
}

namespace {

Tensor glorot(Index rows, Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t(i) = u(rng);
  return t;
}

std::vector<KanLayer> make_kan(ParameterStore& store, const std::string& name, Index n_in,
                               Index n_out, Index hidden, const KanOptions& opts,
                               std::mt19937_64& rng) {
  std::vector<KanLayer> layers;
  if (hidden > 0) {
    layers.push_back(KanLayer::create(store, name + ".kan0", n_in, hidden, opts, rng));
    layers.push_back(KanLayer::create(store, name + ".kan1", hidden, n_out, opts, rng));
  } else {
    layers.push_back(KanLayer::create(store, name + ".kan", n_in, n_out, opts, rng));
  }
  return layers;
}

}  // namespace

Scorer Scorer::create(const ScoringConfig& cfg, ParameterStore& store, const std::string& name,
                      std::mt19937_64& rng) {
  cfg.validate();
  Scorer s;
  s.cfg_ = cfg;
  ScoreMapping& m = s.mapping_;
  const Index d = cfg.in_dim;
  const Index dp = cfg.projected();

  if (cfg.variant == Variant::kaa) {
    m.kind = ScoreMapping::Kind::kan;
    switch (cfg.backbone) {
      case Backbone::gat:
        m.kan = make_kan(store, name, 2 * d, 1, cfg.kan_hidden, cfg.kan, rng);
        break;
      case Backbone::glcn:
        m.kan = make_kan(store, name, d, 1, cfg.kan_hidden, cfg.kan, rng);
        break;
      case Backbone::cfgat:
        m.kan = make_kan(store, name, d, dp, cfg.kan_hidden, cfg.kan, rng);
        break;
      case Backbone::gt:
      case Backbone::san:
        m.kan = make_kan(store, name, d, d, cfg.kan_hidden, cfg.kan, rng);
        break;
      case Backbone::gat_modified:
        break;
    }
    return s;
  }

  if (cfg.variant == Variant::mlp) {
    m.kind = ScoreMapping::Kind::mlp;
    const Index width = alignment_width(alignment_of(cfg.backbone), d);
    m.mlp_w1 = store.add(name + ".mlp_w1", glorot(width, width, rng));
    m.mlp_w2 = store.add(name + ".mlp_w2", glorot(width, 1, rng));
    return s;
  }

  m.kind = ScoreMapping::Kind::linear;
  switch (cfg.backbone) {
    case Backbone::gat:
    case Backbone::gat_modified:
      m.w = store.add(name + ".w", glorot(d, dp, rng));
      m.a = store.add(name + ".a", glorot(2 * dp, 1, rng));
      break;
    case Backbone::glcn:
      m.a = store.add(name + ".a", glorot(d, 1, rng));
      break;
    case Backbone::cfgat:
      m.w = store.add(name + ".w", glorot(d, dp, rng));
      break;
    case Backbone::gt:
    case Backbone::san:
      m.w_q = store.add(name + ".w_q", glorot(d, dp, rng));
      m.w_k = store.add(name + ".w_k", glorot(d, dp, rng));
      break;
  }
  return s;
}

std::vector<std::size_t> Scorer::parameter_indices() const {
  std::vector<std::size_t> out;
  for (const auto& idx : {mapping_.w, mapping_.a, mapping_.w_q, mapping_.w_k, mapping_.mlp_w1,
                          mapping_.mlp_w2}) {
    if (idx) out.push_back(*idx);
  }
  for (const KanLayer& l : mapping_.kan) {
    out.push_back(l.coefficients);
    if (l.residual_weight) out.push_back(*l.residual_weight);
  }
  return out;
}

namespace {

ad::Var align(AlignmentKind kind, const ad::Var& hi, const ad::Var& hj) {
  switch (kind) {
    case AlignmentKind::concat: {
      const ad::Var parts[] = {hi, hj};
      return ad::concat_cols(parts);
    }
    case AlignmentKind::abs_diff: return ad::abs(hi - hj);
    default: return hj;
  }
}

double dot_scale(const ScoringConfig& cfg, Index key_dim) {
  double s = 1.0 / std::sqrt(static_cast<double>(key_dim));
  if (cfg.backbone == Backbone::san) s /= (cfg.gamma + 1.0);
  return s;
}

}  // namespace

ad::Var score_pairs(const Scorer& scorer, const std::vector<ad::Var>& bound, const ad::Var& h_src,
                    const ad::Var& h_dst) {
  const ScoringConfig& cfg = scorer.config();
  const ScoreMapping& m = scorer.mapping();
  if (h_src.cols() != cfg.in_dim || h_dst.cols() != cfg.in_dim || h_src.rows() != h_dst.rows()) {
    throw ShapeError("score_pairs: expected two E x " + std::to_string(cfg.in_dim) +
                     " inputs, got " + shape_string(h_src.value()) + " and " +
                     shape_string(h_dst.value()));
  }
  const ad::Var& hj = h_src;
  const ad::Var& hi = h_dst;
  const AlignmentKind kind = alignment_of(cfg.backbone);

  if (m.kind == ScoreMapping::Kind::kan) {
    switch (cfg.backbone) {
      case Backbone::gat:
      case Backbone::glcn:
        return kan_stack_forward(m.kan, bound, align(kind, hi, hj));
      case Backbone::cfgat:
        return ad::cosine_rows(kan_stack_forward(m.kan, bound, hi),
                               kan_stack_forward(m.kan, bound, hj));
      case Backbone::gt:
      case Backbone::san:
        return ad::scale(ad::row_dot(kan_stack_forward(m.kan, bound, hi), hj),
                         dot_scale(cfg, cfg.in_dim));
      case Backbone::gat_modified:
        break;
    }
    throw ParameterError("unsupported KAA backbone");
  }

  if (m.kind == ScoreMapping::Kind::mlp) {
    const ad::Var x = align(kind, hi, hj);
    return ad::relu(x * bound.at(*m.mlp_w1)) * bound.at(*m.mlp_w2);
  }

  switch (cfg.backbone) {
    case Backbone::gat:
    case Backbone::gat_modified: {
      const ad::Var& w = bound.at(*m.w);
      const ad::Var z = align(kind, hi * w, hj * w) * bound.at(*m.a);
      if (cfg.backbone == Backbone::gat) return ad::leaky_relu(z);
      return -ad::leaky_relu(ad::abs(z));
    }
    case Backbone::glcn:
      return ad::relu(align(kind, hi, hj) * bound.at(*m.a));
    case Backbone::cfgat: {
      const ad::Var& w = bound.at(*m.w);
      return ad::leaky_relu(ad::cosine_rows(hi * w, hj * w));
    }
    case Backbone::gt:
    case Backbone::san:
      return ad::scale(ad::row_dot(hi * bound.at(*m.w_q), hj * bound.at(*m.w_k)),
                       dot_scale(cfg, cfg.projected()));
  }
  throw ParameterError("unsupported backbone");
}

Vector score_pairs(const Scorer& scorer, const ParameterStore& store, const Tensor& h_src,
                   const Tensor& h_dst) {
  ad::Tape tape;
  const auto bound = store.bind(tape);
  return score_pairs(scorer, bound, tape.constant(h_src), tape.constant(h_dst)).value().col(0);
}

ad::Var normalize(const ad::Var& scores, std::span<const Index> dst, Index num_nodes) {
  return ad::segment_softmax(scores, dst, num_nodes);
}

Vector normalize(const Vector& scores, std::span<const Index> dst, Index num_nodes) {
  return segment_softmax(scores, dst, num_nodes);
}

MultiHeadScorer MultiHeadScorer::create(const ScoringConfig& cfg, ParameterStore& store,
                                        const std::string& name, std::mt19937_64& rng) {
  cfg.validate();
  MultiHeadScorer out;
  for (Index k = 0; k < cfg.heads; ++k) {
    out.heads.push_back(Scorer::create(cfg, store, name + ".head" + std::to_string(k), rng));
  }
  return out;
}

std::vector<ad::Var> multi_head(const MultiHeadScorer& scorer, const std::vector<ad::Var>& bound,
                                const ad::Var& h_src, const ad::Var& h_dst,
                                std::span<const Index> dst, Index num_nodes) {
  std::vector<ad::Var> out;
  out.reserve(scorer.heads.size());
  for (const Scorer& head : scorer.heads) {
    out.push_back(normalize(score_pairs(head, bound, h_src, h_dst), dst, num_nodes));
  }
  return out;
}

double static_attention_probe(const ScoringConfig& cfg, const Tensor& queries, const Tensor& keys,
                              int n_param_samples, std::uint64_t seed) {
  if (queries.rows() < 1 || keys.rows() < 1) throw ParameterError("probe needs queries and keys");
  if (n_param_samples < 1) throw ParameterError("probe needs at least one sample");
  if (queries.cols() != cfg.in_dim || keys.cols() != cfg.in_dim) {
    throw ShapeError("probe inputs must have width " + std::to_string(cfg.in_dim));
  }
  for (Index a = 0; a < keys.rows(); ++a) {
    for (Index b = a + 1; b < keys.rows(); ++b) {
      if (keys.row(a) == keys.row(b)) {
        throw DegenerateInputError("probe keys " + std::to_string(a) + " and " +
                                   std::to_string(b) + " coincide");
      }
    }
  }
  const Index m = queries.rows();
  const Index n = keys.rows();
  // All (query, key) pairs, query-major.
  Tensor h_dst(m * n, cfg.in_dim), h_src(m * n, cfg.in_dim);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      h_dst.row(i * n + j) = queries.row(i);
      h_src.row(i * n + j) = keys.row(j);
    }
  }
  std::mt19937_64 rng(seed);
  int static_count = 0;
  for (int sample = 0; sample < n_param_samples; ++sample) {
    ParameterStore store;
    const Scorer scorer = Scorer::create(cfg, store, "probe", rng);
    const Vector s = score_pairs(scorer, store, h_src, h_dst);
    Index first = -1;
    bool same = true;
    for (Index i = 0; i < m && same; ++i) {
      Index best = 0;
      for (Index j = 1; j < n; ++j) {
        if (s[i * n + j] > s[i * n + best]) best = j;
      }
      if (first < 0) first = best;
      same = best == first;
    }
    if (same) ++static_count;
  }
  return static_cast<double>(static_count) / n_param_samples;
}

}  // namespace kaa
