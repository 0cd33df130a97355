#include "kaa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kaa {

std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

namespace {

void check_segments(std::span<const Index> segments, Index entries, Index num_segments,
                    bool require_nonempty) {
  if (static_cast<Index>(segments.size()) != entries) {
    throw ShapeError("segment map has " + std::to_string(segments.size()) +
                     " entries, values have " + std::to_string(entries));
  }
  std::vector<char> seen(static_cast<std::size_t>(std::max<Index>(num_segments, 0)), 0);
  for (Index s : segments) {
    if (s < 0 || s >= num_segments) {
      throw ContractError("segment id " + std::to_string(s) + " outside [0, " +
                          std::to_string(num_segments) + ")");
    }
    seen[static_cast<std::size_t>(s)] = 1;
  }
  if (require_nonempty) {
    for (Index s = 0; s < num_segments; ++s) {
      if (!seen[static_cast<std::size_t>(s)]) {
        throw ContractError("segment " + std::to_string(s) + " is empty");
      }
    }
  }
}

}  // namespace

Vector segment_softmax(const Vector& scores, std::span<const Index> segments,
                       Index num_segments) {
  check_segments(segments, scores.size(), num_segments, true);
  Vector max_score = Vector::Constant(num_segments, -std::numeric_limits<double>::infinity());
  for (Index e = 0; e < scores.size(); ++e) {
    max_score[segments[e]] = std::max(max_score[segments[e]], scores[e]);
  }
  Vector out(scores.size());
  Vector denom = Vector::Zero(num_segments);
  for (Index e = 0; e < scores.size(); ++e) {
    out[e] = std::exp(scores[e] - max_score[segments[e]]);
    denom[segments[e]] += out[e];
  }
  for (Index e = 0; e < scores.size(); ++e) out[e] /= denom[segments[e]];
  return out;
}

namespace ad {

// ---------------------------------------------------------------------------
// Tape

void Tape::check_owner(const Var& v) const {
  if (v.tape_ != this) throw ContractError("variable does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    check_owner(p);
    needs = needs || nodes_[p.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  check_owner(loss);
  const Tensor& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(lv));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad = Tensor::Ones(1, 1);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward) continue;
    // Move the gradient out so the closure may not alias it while accumulating.
    const Tensor g = n.grad;
    n.backward(*this, g);
  }
}

Tensor Tape::grad(const Var& v) const {
  check_owner(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.size() == 0) return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Arithmetic

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.value()) + " and " +
                     shape_string(b.value()) + " differ");
  }
}

Tape& tape_of(const Var& a, const Var& b) {
  if (!a.valid() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_string(a.value()) + " x " +
                     shape_string(b.value()) + ")");
  }
  Tape& t = tape_of(a, b);
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g * b.value().transpose());
    tp.accumulate(b, a.value().transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tape& t = tape_of(a, b);
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tape& t = tape_of(a, b);
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var cwise_product(const Var& a, const Var& b) {
  require_same_shape(a, b, "cwise_product");
  Tape& t = tape_of(a, b);
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g.cwiseProduct(b.value()));
    tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& x, double factor) {
  return x.tape()->record(x.value() * factor, {x}, [x, factor](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g * factor);
  });
}

Var operator-(const Var& x) { return scale(x, -1.0); }

Var add_row_bias(const Var& x, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_string(bias.value()) + " for input " +
                     shape_string(x.value()));
  }
  Tape& t = tape_of(x, bias);
  Tensor out = x.value().rowwise() + bias.value().row(0);
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g);
    tp.accumulate(bias, g.colwise().sum());
  });
}

Var mul_constant(const Var& x, const Tensor& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw ShapeError("mul_constant: mask " + shape_string(mask) + " for input " +
                     shape_string(x.value()));
  }
  return x.tape()->record(x.value().cwiseProduct(mask), {x}, [x, mask](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g.cwiseProduct(mask));
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double apply(ElementwiseKind kind, double slope, double v) {
  switch (kind) {
    case ElementwiseKind::relu: return v > 0 ? v : 0.0;
    case ElementwiseKind::leaky_relu: return v > 0 ? v : slope * v;
    case ElementwiseKind::abs: return std::abs(v);
    case ElementwiseKind::neg: return -v;
    case ElementwiseKind::silu: return v * sigmoid(v);
    case ElementwiseKind::elu: return v > 0 ? v : std::expm1(v);
    case ElementwiseKind::tanh: return std::tanh(v);
    case ElementwiseKind::identity: return v;
  }
  return v;
}

double derivative(ElementwiseKind kind, double slope, double v) {
  switch (kind) {
    case ElementwiseKind::relu: return v > 0 ? 1.0 : 0.0;
    case ElementwiseKind::leaky_relu: return v > 0 ? 1.0 : (v < 0 ? slope : 0.0);
    case ElementwiseKind::abs: return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    case ElementwiseKind::neg: return -1.0;
    case ElementwiseKind::silu: {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    }
    case ElementwiseKind::elu: return v > 0 ? 1.0 : std::exp(v);
    case ElementwiseKind::tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case ElementwiseKind::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

Var elementwise(const Var& x, Elementwise op) {
  const ElementwiseKind kind = op.kind;
  const double slope = op.slope;
  Tensor out = x.value().unaryExpr([=](double v) { return apply(kind, slope, v); });
  return x.tape()->record(std::move(out), {x}, [x, kind, slope](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g.cwiseProduct(
                         x.value().unaryExpr([=](double v) { return derivative(kind, slope, v); })));
  });
}

Var relu(const Var& x) { return elementwise(x, {ElementwiseKind::relu}); }
Var leaky_relu(const Var& x, double slope) {
  return elementwise(x, {ElementwiseKind::leaky_relu, slope});
}
Var abs(const Var& x) { return elementwise(x, {ElementwiseKind::abs}); }
Var silu(const Var& x) { return elementwise(x, {ElementwiseKind::silu}); }
Var elu(const Var& x) { return elementwise(x, {ElementwiseKind::elu}); }
Var tanh(const Var& x) { return elementwise(x, {ElementwiseKind::tanh}); }

Var cosine_rows(const Var& a, const Var& b) {
  require_same_shape(a, b, "cosine_rows");
  Tape& t = tape_of(a, b);
  const Vector na = a.value().rowwise().norm();
  const Vector nb = b.value().rowwise().norm();
  for (Index r = 0; r < na.size(); ++r) {
    if (na[r] == 0.0 || nb[r] == 0.0) {
      throw DegenerateInputError("cosine_rows: row " + std::to_string(r) + " has zero norm");
    }
  }
  const Vector dots = a.value().cwiseProduct(b.value()).rowwise().sum();
  Vector cosv = dots.cwiseQuotient(na.cwiseProduct(nb));
  return t.record(Tensor(cosv), {a, b}, [a, b, na, nb, cosv](Tape& tp, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor ga(av.rows(), av.cols());
    Tensor gb(bv.rows(), bv.cols());
    for (Index r = 0; r < av.rows(); ++r) {
      const double inv = 1.0 / (na[r] * nb[r]);
      ga.row(r) = g(r, 0) * (bv.row(r) * inv - cosv[r] * av.row(r) / (na[r] * na[r]));
      gb.row(r) = g(r, 0) * (av.row(r) * inv - cosv[r] * bv.row(r) / (nb[r] * nb[r]));
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var row_dot(const Var& a, const Var& b) {
  require_same_shape(a, b, "row_dot");
  Tape& t = tape_of(a, b);
  Tensor out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, (b.value().array().colwise() * g.col(0).array()).matrix());
    tp.accumulate(b, (a.value().array().colwise() * g.col(0).array()).matrix());
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& x) {
  Tensor out(1, 1);
  out(0, 0) = x.value().sum();
  const Index r = x.rows(), c = x.cols();
  return x.tape()->record(std::move(out), {x}, [x, r, c](Tape& tp, const Tensor& g) {
    tp.accumulate(x, Tensor::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var gather_rows(const Var& x, std::span<const Index> rows) {
  const Index n = x.rows();
  Tensor out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                       shape_string(x.value()));
    }
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return x.tape()->record(std::move(out), {x}, [x, idx](Tape& tp, const Tensor& g) {
    Tensor gx = Tensor::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Index>(i));
    tp.accumulate(x, gx);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts " + std::to_string(rows) + " and " +
                       std::to_string(p.rows()) + " differ");
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), parts, [ps](Tape& tp, const Tensor& g) {
    Index off = 0;
    for (const Var& p : ps) {
      tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

// ---------------------------------------------------------------------------
// Segment operations

Var segment_softmax(const Var& scores, std::span<const Index> segments, Index num_segments) {
  if (scores.cols() != 1) {
    throw ShapeError("segment_softmax expects a column of scores, got " +
                     shape_string(scores.value()));
  }
  Vector out = kaa::segment_softmax(Vector(scores.value().col(0)), segments, num_segments);
  std::vector<Index> seg(segments.begin(), segments.end());
  Tensor outm = out;
  return scores.tape()->record(std::move(outm), {scores},
                               [scores, seg, out, num_segments](Tape& tp, const Tensor& g) {
                                 Vector dot = Vector::Zero(num_segments);
                                 for (std::size_t e = 0; e < seg.size(); ++e) {
                                   dot[seg[e]] += out[static_cast<Index>(e)] * g(static_cast<Index>(e), 0);
                                 }
                                 Tensor gs(out.size(), 1);
                                 for (std::size_t e = 0; e < seg.size(); ++e) {
                                   const auto i = static_cast<Index>(e);
                                   gs(i, 0) = out[i] * (g(i, 0) - dot[seg[e]]);
                                 }
                                 tp.accumulate(scores, gs);
                               });
}

Var segment_weighted_sum(const Var& weights, const Var& messages,
                         std::span<const Index> segments, Index num_segments) {
  if (weights.cols() != 1 || weights.rows() != messages.rows()) {
    throw ShapeError("segment_weighted_sum: weights " + shape_string(weights.value()) +
                     " for messages " + shape_string(messages.value()));
  }
  check_segments(segments, messages.rows(), num_segments, false);
  Tape& t = tape_of(weights, messages);
  const Tensor& w = weights.value();
  const Tensor& m = messages.value();
  Tensor out = Tensor::Zero(num_segments, m.cols());
  for (Index e = 0; e < m.rows(); ++e) out.row(segments[e]) += w(e, 0) * m.row(e);
  std::vector<Index> seg(segments.begin(), segments.end());
  return t.record(std::move(out), {weights, messages},
                  [weights, messages, seg](Tape& tp, const Tensor& g) {
                    const Tensor& wv = weights.value();
                    const Tensor& mv = messages.value();
                    Tensor gw(mv.rows(), 1);
                    Tensor gm(mv.rows(), mv.cols());
                    for (Index e = 0; e < mv.rows(); ++e) {
                      const auto gr = g.row(seg[static_cast<std::size_t>(e)]);
                      gw(e, 0) = gr.dot(mv.row(e));
                      gm.row(e) = wv(e, 0) * gr;
                    }
                    tp.accumulate(weights, gw);
                    tp.accumulate(messages, gm);
                  });
}

Var segment_mean(const Var& x, std::span<const Index> segments, Index num_segments) {
  check_segments(segments, x.rows(), num_segments, true);
  Vector counts = Vector::Zero(num_segments);
  for (Index s : segments) counts[s] += 1.0;
  Tensor out = Tensor::Zero(num_segments, x.cols());
  for (Index r = 0; r < x.rows(); ++r) out.row(segments[r]) += x.value().row(r) / counts[segments[r]];
  std::vector<Index> seg(segments.begin(), segments.end());
  return x.tape()->record(std::move(out), {x}, [x, seg, counts](Tape& tp, const Tensor& g) {
    Tensor gx(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      const Index s = seg[static_cast<std::size_t>(r)];
      gx.row(r) = g.row(s) / counts[s];
    }
    tp.accumulate(x, gx);
  });
}

// ---------------------------------------------------------------------------
// Losses

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels,
                          std::span<const Index> rows) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(logits.value()));
  }
  if (rows.empty()) throw ParameterError("softmax_cross_entropy: no rows selected");
  const Tensor& z = logits.value();
  Tensor probs(static_cast<Index>(rows.size()), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= z.cols()) {
      throw ParameterError("label " + std::to_string(y) + " outside " +
                           std::to_string(z.cols()) + " classes");
    }
    const double mx = z.row(r).maxCoeff();
    const Eigen::RowVectorXd ex = (z.row(r).array() - mx).exp().matrix();
    const double denom = ex.sum();
    probs.row(static_cast<Index>(i)) = ex / denom;
    loss -= (z(r, y) - mx) - std::log(denom);
  }
  const double n = static_cast<double>(rows.size());
  Tensor out(1, 1);
  out(0, 0) = loss / n;
  std::vector<Index> rs(rows.begin(), rows.end());
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape()->record(std::move(out), {logits},
                               [logits, rs, ys, probs, n](Tape& tp, const Tensor& g) {
                                 Tensor gz = Tensor::Zero(logits.rows(), logits.cols());
                                 for (std::size_t i = 0; i < rs.size(); ++i) {
                                   const Index r = rs[i];
                                   gz.row(r) += probs.row(static_cast<Index>(i));
                                   gz(r, ys[static_cast<std::size_t>(r)]) -= 1.0;
                                 }
                                 tp.accumulate(logits, gz * (g(0, 0) / n));
                               });
}

Var bce_with_logits(const Var& logits, const Vector& targets) {
  if (logits.cols() != 1 || logits.rows() != targets.size()) {
    throw ShapeError("bce_with_logits: logits " + shape_string(logits.value()) + " for " +
                     std::to_string(targets.size()) + " targets");
  }
  const Tensor& z = logits.value();
  const double n = static_cast<double>(targets.size());
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const double v = z(i, 0);
    loss += std::max(v, 0.0) - v * targets[i] + std::log1p(std::exp(-std::abs(v)));
  }
  Tensor out(1, 1);
  out(0, 0) = loss / n;
  return logits.tape()->record(std::move(out), {logits},
                               [logits, targets, n](Tape& tp, const Tensor& g) {
                                 Tensor gz(logits.rows(), 1);
                                 for (Index i = 0; i < gz.rows(); ++i) {
                                   gz(i, 0) = (sigmoid(logits.value()(i, 0)) - targets[i]) / n;
                                 }
                                 tp.accumulate(logits, gz * g(0, 0));
                               });
}

}  // namespace ad
}  // namespace kaa
