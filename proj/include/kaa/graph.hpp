#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kaa/autodiff.hpp"

namespace kaa {

/// Directed edge; the destination aggregates messages from the source.
struct Edge {
  Index src = 0;
  Index dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

enum class Split : std::uint8_t { none, train, val, test };

struct Graph {
  Index num_nodes = 0;
  std::vector<Edge> edges;
  Tensor features;          // num_nodes x d
  std::vector<int> labels;  // per node; empty for graph-level tasks
  int graph_label = -1;     // graph-level tasks only
  std::vector<Split> split; // per node; one tag per node keeps the masks disjoint

  Index feature_dim() const { return features.cols(); }
  std::vector<Index> nodes_in(Split s) const;
  std::vector<Index> sources() const;
  std::vector<Index> destinations() const;
  bool has_edge(Index src, Index dst) const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

enum class Task { node_classification, link_prediction, graph_classification };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct GraphCollection {
  std::vector<Graph> graphs;
  Task task = Task::node_classification;
  std::vector<Split> graph_split;  // graph_classification only

  Index num_classes() const;
};

struct LoadOptions {
  bool undirected = false;
  std::uint64_t split_seed = 0;
};

/// Reads the edge / feature / label / optional mask text formats.
/// Without a mask file a seeded 60/20/20 split is generated.
Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::filesystem::path& label_path,
                 const std::optional<std::filesystem::path>& mask_path = std::nullopt,
                 const LoadOptions& options = {});

/// Writes the four files so that load_graph(..., {undirected = false}) reproduces `g`.
void write_graph(const Graph& g, const std::filesystem::path& edge_path,
                 const std::filesystem::path& feature_path, const std::filesystem::path& label_path,
                 const std::filesystem::path& mask_path);

/// Appends (i, i) for every node lacking a self-loop. Idempotent.
Graph add_self_loops(Graph g);

/// Seeded shuffle of `nodes` into 60/20/20 train/val/test.
void assign_split(Graph& g, const std::vector<Index>& nodes, std::uint64_t seed);

/// Disjoint union; node ids of graph k are offset by the sizes of graphs 0..k-1.
Graph merge_disjoint(const std::vector<Graph>& graphs);

struct DictionaryLookupOptions {
  Index k = 5;
  Index num_graphs = 1;
  std::uint64_t seed = 0;
};

/// Complete bipartite key/query graphs. Nodes [0, k) are keys carrying
/// [one-hot id | one-hot value class]; nodes [k, 2k) are queries carrying
/// the one-hot id of a designated key and labelled with that key's value.
/// Edges run both ways between every query and key. Queries are split
/// 60/20/20 per graph; keys are unmasked.
GraphCollection gen_dictionary_lookup(const DictionaryLookupOptions& options);

struct SbmOptions {
  Index blocks = 2;
  Index per_block = 10;
  double p_in = 0.5;
  double p_out = 0.05;
  double feature_noise = 0.5;
  std::uint64_t seed = 0;
};

/// Undirected stochastic block model (both directions stored), block id as label,
/// one-hot block features plus Gaussian noise, 60/20/20 node split.
Graph gen_sbm(const SbmOptions& options);

/// Held-out positive edges and sampled negatives for link prediction.
struct LinkSplit {
  Graph train_graph;  // message-passing graph without held-out pairs
  std::vector<Edge> train_pos, val_pos, test_pos;
  std::vector<Edge> train_neg, val_neg, test_neg;
};

/// Splits undirected node pairs 70/10/20 and draws an equal number of uniform
/// non-edges for each part.
LinkSplit split_edges(const Graph& g, std::uint64_t seed);

}  // namespace kaa
