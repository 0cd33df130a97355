#include "kaa/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace kaa {

std::string to_string(TaskHead h) {
  switch (h) {
    case TaskHead::node_softmax: return "node_softmax";
    case TaskHead::link_dot: return "link_dot";
    case TaskHead::graph_meanpool_softmax: return "graph_meanpool_softmax";
  }
  return "node_softmax";
}

TaskHead task_head_from_string(const std::string& name) {
  for (TaskHead h : {TaskHead::node_softmax, TaskHead::link_dot, TaskHead::graph_meanpool_softmax}) {
    if (to_string(h) == name) return h;
  }
  throw ParameterError("unknown task head '" + name + "'");
}

TaskHead default_head(Task task) {
  switch (task) {
    case Task::node_classification: return TaskHead::node_softmax;
    case Task::link_prediction: return TaskHead::link_dot;
    case Task::graph_classification: return TaskHead::graph_meanpool_softmax;
  }
  return TaskHead::node_softmax;
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw ParameterError("model needs at least one layer");
  if (hidden_dim < 1) throw ParameterError("hidden width must be positive");
  if (heads < 1) throw ParameterError("model needs at least one head");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
}

bool ModelConfig::on_search_grid() const {
  auto in = [](auto v, std::initializer_list<decltype(v)> grid) {
    return std::find(grid.begin(), grid.end(), v) != grid.end();
  };
  return in(num_layers, {2, 3, 4, 5}) && in(hidden_dim, {8, 16, 32, 64, 128, 256}) &&
         in(heads, {1, 2, 4, 8}) && in(dropout, {0.0, 0.1, 0.3, 0.5, 0.8});
}

EdgeIndex EdgeIndex::of(const Graph& g) {
  return EdgeIndex{g.num_nodes, g.sources(), g.destinations()};
}

// ---------------------------------------------------------------------------
// Layers and model

namespace {

Tensor glorot(Index rows, Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t(i) = u(rng);
  return t;
}

Tensor dropout_mask(Index rows, Index cols, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor m(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < m.size(); ++i) m(i) = keep(rng) ? scale : 0.0;
  return m;
}

}  // namespace

ad::Var layer_forward(const GnnLayer& layer, const std::vector<ad::Var>& bound,
                      const EdgeIndex& edges, const ad::Var& h, const DropoutContext* dropout) {
  if (h.cols() != layer.in_dim || h.rows() != edges.num_nodes) {
    throw ShapeError("layer expects " + shape_string(edges.num_nodes, layer.in_dim) +
                     " node features, got " + shape_string(h.value()));
  }
  const ad::Var h_src = ad::gather_rows(h, edges.src);
  const ad::Var h_dst = ad::gather_rows(h, edges.dst);
  std::vector<ad::Var> per_head;
  for (std::size_t k = 0; k < layer.scorer.heads.size(); ++k) {
    ad::Var alpha = normalize(score_pairs(layer.scorer.heads[k], bound, h_src, h_dst), edges.dst,
                              edges.num_nodes);
    if (dropout && dropout->attention && dropout->rate > 0.0) {
      alpha = ad::mul_constant(alpha, dropout_mask(alpha.rows(), 1, dropout->rate, *dropout->rng));
    }
    const ad::Var node_msg = layer.value.empty() ? h : h * bound.at(layer.value[k]);
    per_head.push_back(ad::segment_weighted_sum(alpha, ad::gather_rows(node_msg, edges.src),
                                                edges.dst, edges.num_nodes));
  }

  if (layer.last) {
    ad::Var out = per_head.front();
    for (std::size_t k = 1; k < per_head.size(); ++k) out = out + per_head[k];
    if (per_head.size() > 1) out = ad::scale(out, 1.0 / static_cast<double>(per_head.size()));
    if (layer.update_w) {
      out = ad::add_row_bias(out * bound.at(*layer.update_w), bound.at(*layer.update_b));
    }
    return out;
  }
  const ad::Var agg = per_head.size() == 1 ? per_head.front() : ad::concat_cols(per_head);
  return ad::elu(ad::add_row_bias(agg * bound.at(*layer.update_w), bound.at(*layer.update_b)));
}

Model Model::create(const ModelConfig& cfg, Index in_dim, Index out_dim, std::uint64_t seed) {
  cfg.validate();
  if (in_dim < 1 || out_dim < 1) throw ParameterError("model widths must be positive");
  Model m;
  m.cfg_ = cfg;
  std::mt19937_64 rng(seed);
  Index width = in_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    GnnLayer layer;
    layer.last = l == cfg.num_layers - 1;
    layer.in_dim = width;
    layer.head_dim = layer.last ? out_dim : cfg.hidden_dim;
    const std::string name = "layer" + std::to_string(l);

    ScoringConfig sc = cfg.scoring;
    sc.in_dim = width;
    sc.heads = cfg.heads;
    if (sc.proj_dim == 0) sc.proj_dim = layer.head_dim;
    layer.scorer = MultiHeadScorer::create(sc, m.params_, name + ".attn", rng);

    const Index msg_dim = cfg.value_transform ? layer.head_dim : width;
    if (cfg.value_transform) {
      for (Index k = 0; k < cfg.heads; ++k) {
        layer.value.push_back(m.params_.add(name + ".w_v" + std::to_string(k),
                                            glorot(width, layer.head_dim, rng)));
      }
    }
    if (!layer.last) {
      const Index agg = msg_dim * cfg.heads;
      const Index out = layer.head_dim * cfg.heads;
      layer.update_w = m.params_.add(name + ".update_w", glorot(agg, out, rng));
      layer.update_b = m.params_.add(name + ".update_b", Tensor::Zero(1, out));
    } else if (!cfg.value_transform) {
      layer.update_w = m.params_.add(name + ".update_w", glorot(msg_dim, layer.head_dim, rng));
      layer.update_b = m.params_.add(name + ".update_b", Tensor::Zero(1, layer.head_dim));
    }
    width = layer.out_dim();
    m.layers_.push_back(std::move(layer));
  }
  if (m.params_.scalar_count() == 0) throw ParameterError("model has no learnable parameters");
  return m;
}

ad::Var Model::forward(const std::vector<ad::Var>& bound, const EdgeIndex& edges, const ad::Var& x,
                       const DropoutContext* dropout) const {
  ad::Var h = x;
  for (const GnnLayer& layer : layers_) {
    if (dropout && dropout->rate > 0.0) {
      h = ad::mul_constant(h, dropout_mask(h.rows(), h.cols(), dropout->rate, *dropout->rng));
    }
    h = layer_forward(layer, bound, edges, h, dropout);
  }
  return h;
}

Tensor Model::embed(const EdgeIndex& edges, const Tensor& x) const {
  ad::Tape tape;
  const auto bound = params_.bind(tape);
  return forward(bound, edges, tape.constant(x), nullptr).value();
}

void Model::zero_scoring_parameters() {
  for (const GnnLayer& layer : layers_) {
    for (const Scorer& head : layer.scorer.heads) {
      for (std::size_t idx : head.parameter_indices()) params_[idx].value.setZero();
    }
  }
}

// ---------------------------------------------------------------------------
// Data preparation

PreparedData prepare(const GraphCollection& data, std::uint64_t seed) {
  if (data.graphs.empty()) throw ParameterError("empty graph collection");
  const Index dim = data.graphs.front().feature_dim();
  for (const Graph& g : data.graphs) {
    if (g.feature_dim() != dim) throw ShapeError("graphs in a collection must share feature width");
  }
  PreparedData out;
  out.task = data.task;
  switch (data.task) {
    case Task::node_classification: {
      out.graph = add_self_loops(merge_disjoint(data.graphs));
      out.num_classes = data.num_classes();
      break;
    }
    case Task::link_prediction: {
      if (data.graphs.size() != 1) throw ParameterError("link prediction expects a single graph");
      out.links = split_edges(data.graphs.front(), seed);
      out.graph = add_self_loops(out.links->train_graph);
      break;
    }
    case Task::graph_classification: {
      out.graph = add_self_loops(merge_disjoint(data.graphs));
      out.num_graphs = static_cast<Index>(data.graphs.size());
      for (std::size_t gi = 0; gi < data.graphs.size(); ++gi) {
        out.graph_of_node.insert(out.graph_of_node.end(),
                                 static_cast<std::size_t>(data.graphs[gi].num_nodes),
                                 static_cast<Index>(gi));
        out.graph_labels.push_back(data.graphs[gi].graph_label);
      }
      out.graph_split = data.graph_split;
      if (out.graph_split.size() != data.graphs.size()) {
        throw ParameterError("graph classification needs one split tag per graph");
      }
      out.num_classes = data.num_classes();
      break;
    }
  }
  out.edges = EdgeIndex::of(out.graph);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw ParameterError("ROC-AUC needs positive and negative scores");
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

namespace {

Index argmax_row(const Tensor& t, Index r) {
  Index best = 0;
  for (Index c = 1; c < t.cols(); ++c) {
    if (t(r, c) > t(r, best)) best = c;
  }
  return best;
}

std::vector<Index> graphs_in(const PreparedData& d, Split s) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < d.graph_split.size(); ++i) {
    if (d.graph_split[i] == s) out.push_back(static_cast<Index>(i));
  }
  return out;
}

const std::vector<Edge>& link_pos(const LinkSplit& l, Split s) {
  return s == Split::train ? l.train_pos : (s == Split::val ? l.val_pos : l.test_pos);
}
const std::vector<Edge>& link_neg(const LinkSplit& l, Split s) {
  return s == Split::train ? l.train_neg : (s == Split::val ? l.val_neg : l.test_neg);
}

struct PairIndex {
  std::vector<Index> u, v;
  Vector target;
};

PairIndex link_pairs(const LinkSplit& l, Split s) {
  PairIndex p;
  const auto& pos = link_pos(l, s);
  const auto& neg = link_neg(l, s);
  p.target.resize(static_cast<Index>(pos.size() + neg.size()));
  Index i = 0;
  for (const Edge& e : pos) {
    p.u.push_back(e.src);
    p.v.push_back(e.dst);
    p.target[i++] = 1.0;
  }
  for (const Edge& e : neg) {
    p.u.push_back(e.src);
    p.v.push_back(e.dst);
    p.target[i++] = 0.0;
  }
  return p;
}

/// Task loss of model outputs on a split.
ad::Var task_loss(const PreparedData& data, const ad::Var& out, Split s) {
  switch (data.task) {
    case Task::node_classification: {
      const auto rows = data.graph.nodes_in(s);
      return ad::softmax_cross_entropy(out, data.graph.labels, rows);
    }
    case Task::graph_classification: {
      const ad::Var pooled = ad::segment_mean(out, data.graph_of_node, data.num_graphs);
      return ad::softmax_cross_entropy(pooled, data.graph_labels, graphs_in(data, s));
    }
    case Task::link_prediction: {
      const PairIndex p = link_pairs(*data.links, s);
      const ad::Var logits = ad::row_dot(ad::gather_rows(out, p.u), ad::gather_rows(out, p.v));
      return ad::bce_with_logits(logits, p.target);
    }
  }
  throw ParameterError("unknown task");
}

Index output_width(const ModelConfig& cfg, const PreparedData& data) {
  return cfg.task_head == TaskHead::link_dot ? cfg.hidden_dim : data.num_classes;
}

/// Validation score used for model selection: accuracy or ROC-AUC.
double selection_metric(const Metrics& m, Task task) {
  return task == Task::link_prediction ? m.roc_auc : m.accuracy;
}

}  // namespace

namespace {

Metrics metrics_of(const Tensor& out, const PreparedData& data, Split which) {
  Metrics m;
  switch (data.task) {
    case Task::node_classification: {
      const auto rows = data.graph.nodes_in(which);
      if (rows.empty()) throw ParameterError("evaluation split has no nodes");
      Index correct = 0;
      for (Index r : rows) {
        correct += argmax_row(out, r) == data.graph.labels[static_cast<std::size_t>(r)];
      }
      m.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
      break;
    }
    case Task::graph_classification: {
      const auto gs = graphs_in(data, which);
      if (gs.empty()) throw ParameterError("evaluation split has no graphs");
      Tensor pooled = Tensor::Zero(data.num_graphs, out.cols());
      Vector count = Vector::Zero(data.num_graphs);
      for (Index r = 0; r < out.rows(); ++r) {
        pooled.row(data.graph_of_node[static_cast<std::size_t>(r)]) += out.row(r);
        count[data.graph_of_node[static_cast<std::size_t>(r)]] += 1.0;
      }
      Index correct = 0;
      for (Index g : gs) {
        pooled.row(g) /= count[g];
        correct += argmax_row(pooled, g) == data.graph_labels[static_cast<std::size_t>(g)];
      }
      m.accuracy = static_cast<double>(correct) / static_cast<double>(gs.size());
      break;
    }
    case Task::link_prediction: {
      const auto& pos = link_pos(*data.links, which);
      const auto& neg = link_neg(*data.links, which);
      if (pos.empty()) throw ParameterError("evaluation split has no edges");
      std::vector<double> ps, ns;
      for (const Edge& e : pos) ps.push_back(out.row(e.src).dot(out.row(e.dst)));
      for (const Edge& e : neg) ns.push_back(out.row(e.src).dot(out.row(e.dst)));
      m.roc_auc = roc_auc(ps, ns);
      break;
    }
  }
  return m;
}

double loss_of(const Tensor& out, const PreparedData& data, Split which) {
  ad::Tape tape;
  return task_loss(data, tape.constant(out), which).value()(0, 0);
}

}  // namespace

Metrics evaluate(const Model& model, const PreparedData& data, Split which) {
  return metrics_of(model.embed(data.edges, data.graph.features), data, which);
}

TrainResult train(const ModelConfig& model_cfg, const PreparedData& data, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ParameterError("training needs at least one epoch");
  ModelConfig mc = model_cfg;
  if (data.task == Task::link_prediction) mc.task_head = TaskHead::link_dot;
  Model model = Model::create(mc, data.graph.feature_dim(), output_width(mc, data), cfg.seed);
  Model best = model;
  AdamState state = AdamState::for_parameters(model.params());
  std::mt19937_64 drop_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  DropoutContext drop{mc.dropout, mc.attention_dropout, &drop_rng};

  TrainResult result{model, {}, 0, -1.0, 0};
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> curve;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ad::Tape tape;
    const auto bound = model.params().bind(tape);
    const ad::Var out = model.forward(bound, data.edges, tape.constant(data.graph.features), &drop);
    const ad::Var loss = task_loss(data, out, Split::train);
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) throw TrainingError("non-finite training loss", epoch);
    curve.push_back(lv);
    tape.backward(loss);
    try {
      adam_step(model.params(), model.params().gradients(tape, bound), state, cfg.lr,
                cfg.weight_decay);
    } catch (const DivergenceError& e) {
      throw TrainingError(e.what(), epoch);
    }
    result.epochs_run = epoch;

    // Model selection on the validation split (metric first, loss as tie-break).
    const Tensor eval_out = model.embed(data.edges, data.graph.features);
    const double score = selection_metric(metrics_of(eval_out, data, Split::val), data.task);
    const double val_loss = loss_of(eval_out, data, Split::val);
    if (score > result.best_val || (score == result.best_val && val_loss < best_val_loss)) {
      result.best_val = score;
      best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = model;
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  result.model = best;
  result.metrics = evaluate(best, data, Split::test);
  result.metrics.loss_curve = std::move(curve);
  return result;
}

TrainResult train(const ModelConfig& model, const GraphCollection& data, const TrainConfig& cfg) {
  return train(model, prepare(data, cfg.seed), cfg);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::ordered_json kan_json(const KanOptions& k) {
  return {{"range_min", k.range_min}, {"range_max", k.range_max}, {"grid_size", k.grid_size},
          {"order", k.order},         {"residual", k.residual},   {"normalize_inputs", k.normalize_inputs}};
}

}  // namespace

std::string run_report_json(const ModelConfig& model, const TrainConfig& cfg,
                            const TrainResult& result, const std::string& dataset) {
  nlohmann::ordered_json j;
  j["kind"] = "train";
  j["dataset"] = dataset;
  j["seed"] = cfg.seed;
  j["config"]["model"] = {{"num_layers", model.num_layers},
                          {"hidden_dim", model.hidden_dim},
                          {"heads", model.heads},
                          {"backbone", to_string(model.scoring.backbone)},
                          {"variant", to_string(model.scoring.variant)},
                          {"gamma", model.scoring.gamma},
                          {"kan", kan_json(model.scoring.kan)},
                          {"kan_hidden", model.scoring.kan_hidden},
                          {"dropout", model.dropout},
                          {"attention_dropout", model.attention_dropout},
                          {"value_transform", model.value_transform},
                          {"task_head", to_string(model.task_head)},
                          {"on_search_grid", model.on_search_grid()}};
  j["config"]["train"] = {{"lr", cfg.lr},
                          {"weight_decay", cfg.weight_decay},
                          {"epochs", cfg.epochs},
                          {"patience", cfg.patience}};
  j["epochs_run"] = result.epochs_run;
  j["best_epoch"] = result.best_epoch;
  j["best_val"] = result.best_val;
  j["loss_curve"] = result.metrics.loss_curve;
  j["metrics"] = {{"accuracy", result.metrics.accuracy}, {"roc_auc", result.metrics.roc_auc}};
  if (result.metrics.mae) j["metrics"]["mae"] = *result.metrics.mae;
  j["parameter_count"] = result.model.params().scalar_count();
  return j.dump(2);
}

}  // namespace kaa
