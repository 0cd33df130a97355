#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kaa/attention.hpp"
#include "kaa/graph.hpp"

namespace kaa {

enum class TaskHead { node_softmax, link_dot, graph_meanpool_softmax };

std::string to_string(TaskHead h);
TaskHead task_head_from_string(const std::string& name);
TaskHead default_head(Task task);

struct ModelConfig {
  int num_layers = 2;
  Index hidden_dim = 32;
  Index heads = 1;
  /// Backbone, variant and KAN options; widths are filled per layer.
  ScoringConfig scoring;
  double dropout = 0.0;
  TaskHead task_head = TaskHead::node_softmax;
  /// Apply a learnable W_v to neighbor features inside the aggregation.
  bool value_transform = true;
  /// Also drop attention weights (features are always the dropout target).
  bool attention_dropout = false;

  void validate() const;
  /// True when every hyperparameter lies on the published search grids.
  bool on_search_grid() const;
};

struct TrainConfig {
  double lr = 5e-3;
  double weight_decay = 0.0;
  int epochs = 200;
  std::uint64_t seed = 0;
  int patience = 100;
};

struct Metrics {
  double accuracy = 0.0;
  double roc_auc = 0.0;
  std::optional<double> mae;
  std::vector<double> loss_curve;
};

/// Edge lists of a graph in the order the layers consume them.
struct EdgeIndex {
  Index num_nodes = 0;
  std::vector<Index> src;
  std::vector<Index> dst;

  static EdgeIndex of(const Graph& g);
};

/// One attentive message-passing layer.
struct GnnLayer {
  MultiHeadScorer scorer;
  std::vector<std::size_t> value;        // W_v per head (in_dim x head_dim), if enabled
  std::optional<std::size_t> update_w;   // hidden layers: (heads*head_dim) square
  std::optional<std::size_t> update_b;
  Index in_dim = 0;
  Index head_dim = 0;
  bool last = false;                     // heads averaged, no UPDATE nonlinearity

  Index out_dim() const { return last ? head_dim : head_dim * static_cast<Index>(scorer.heads.size()); }
};

/// Per-forward dropout state; null means evaluation mode.
struct DropoutContext {
  double rate = 0.0;
  bool attention = false;
  std::mt19937_64* rng = nullptr;
};

/// h'_i = UPDATE(sum_j alpha_ij W_v h_j), heads concatenated on hidden layers.
ad::Var layer_forward(const GnnLayer& layer, const std::vector<ad::Var>& bound,
                      const EdgeIndex& edges, const ad::Var& h, const DropoutContext* dropout);

class Model {
 public:
  static Model create(const ModelConfig& cfg, Index in_dim, Index out_dim, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<GnnLayer>& layers() const { return layers_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  ad::Var forward(const std::vector<ad::Var>& bound, const EdgeIndex& edges, const ad::Var& x,
                  const DropoutContext* dropout) const;
  /// Evaluation-mode node outputs.
  Tensor embed(const EdgeIndex& edges, const Tensor& x) const;

  /// Zeroes every attention-scoring parameter (uniform attention).
  void zero_scoring_parameters();

 private:
  ModelConfig cfg_;
  std::vector<GnnLayer> layers_;
  ParameterStore params_;
};

/// Task data after merging, self-loop insertion and (for links) edge splitting.
struct PreparedData {
  Task task = Task::node_classification;
  Graph graph;                       // merged message-passing graph
  EdgeIndex edges;
  std::vector<Index> graph_of_node;  // graph tasks
  std::vector<int> graph_labels;
  std::vector<Split> graph_split;
  Index num_graphs = 0;
  std::optional<LinkSplit> links;
  Index num_classes = 0;
};

PreparedData prepare(const GraphCollection& data, std::uint64_t seed);

struct TrainResult {
  Model model;
  Metrics metrics;     // test-split metrics of the best-validation parameters
  int best_epoch = 0;
  double best_val = 0.0;
  int epochs_run = 0;
};

TrainResult train(const ModelConfig& model, const PreparedData& data, const TrainConfig& cfg);
TrainResult train(const ModelConfig& model, const GraphCollection& data, const TrainConfig& cfg);

/// Metrics of `model` on the chosen split. Throws ParameterError when the split is empty.
Metrics evaluate(const Model& model, const PreparedData& data, Split which = Split::test);

/// Mann-Whitney estimate of P(pos > neg) with ties counted as one half.
double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg);

/// JSON run report: config echo, per-epoch losses, final metrics and seed.
std::string run_report_json(const ModelConfig& model, const TrainConfig& cfg,
                            const TrainResult& result, const std::string& dataset);

}  // namespace kaa
