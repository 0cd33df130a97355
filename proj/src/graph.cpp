#include "kaa/graph.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace kaa {

namespace {

std::uint64_t edge_key(Index src, Index dst) {
  return (static_cast<std::uint64_t>(src) << 32) ^ static_cast<std::uint64_t>(dst);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& token, std::size_t line, const std::string& what) {
  if (token.empty()) throw ParseError("missing " + what, line);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  if (errno != 0 || end != token.c_str() + token.size()) {
    throw ParseError("malformed " + what + " '" + token + "'", line);
  }
  return v;
}

double parse_double(const std::string& token, std::size_t line) {
  const std::string t = strip(token);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || errno == ERANGE || end != t.c_str() + t.size() || !std::isfinite(v)) {
    throw ParseError("malformed feature value '" + t + "'", line);
  }
  return v;
}

Tensor read_features(const std::filesystem::path& path) {
  std::vector<std::vector<double>> rows;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = strip(lines[i]);
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_double(cell, i + 1));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("feature row has " + std::to_string(row.size()) + " columns, expected " +
                           std::to_string(rows.front().size()),
                       i + 1);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConsistencyError("feature file " + path.string() + " has no rows");
  Tensor x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }
  return x;
}

Split parse_split(const std::string& token, std::size_t line) {
  if (token == "train") return Split::train;
  if (token == "val") return Split::val;
  if (token == "test") return Split::test;
  if (token == "none") return Split::none;
  throw ParseError("unknown mask tag '" + token + "'", line);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<Index> Graph::nodes_in(Split s) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(static_cast<Index>(i));
  }
  return out;
}

std::vector<Index> Graph::sources() const {
  std::vector<Index> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.push_back(e.src);
  return out;
}

std::vector<Index> Graph::destinations() const {
  std::vector<Index> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.push_back(e.dst);
  return out;
}

bool Graph::has_edge(Index src, Index dst) const {
  return std::any_of(edges.begin(), edges.end(),
                     [&](const Edge& e) { return e.src == src && e.dst == dst; });
}

std::string to_string(Task task) {
  switch (task) {
    case Task::node_classification: return "node_classification";
    case Task::link_prediction: return "link_prediction";
    case Task::graph_classification: return "graph_classification";
  }
  return "node_classification";
}

Task task_from_string(const std::string& name) {
  if (name == "node_classification" || name == "node") return Task::node_classification;
  if (name == "link_prediction" || name == "link") return Task::link_prediction;
  if (name == "graph_classification" || name == "graph") return Task::graph_classification;
  throw ParameterError("unknown task '" + name + "'");
}

Index GraphCollection::num_classes() const {
  int mx = -1;
  for (const Graph& g : graphs) {
    if (task == Task::graph_classification) {
      mx = std::max(mx, g.graph_label);
    } else {
      for (int y : g.labels) mx = std::max(mx, y);
    }
  }
  return mx + 1;
}

// ---------------------------------------------------------------------------

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::filesystem::path& label_path,
                 const std::optional<std::filesystem::path>& mask_path,
                 const LoadOptions& options) {
  Graph g;
  g.features = read_features(feature_path);
  g.num_nodes = g.features.rows();

  std::unordered_set<std::uint64_t> seen;
  auto push = [&](Index s, Index d) {
    if (seen.insert(edge_key(s, d)).second) g.edges.push_back({s, d});
  };
  const auto edge_lines = read_lines(edge_path);
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    std::string line = edge_lines[i];
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, extra;
    ss >> a >> b;
    if (ss >> extra) throw ParseError("edge line has more than two fields", i + 1);
    const long long src = parse_int(a, i + 1, "source id");
    const long long dst = parse_int(b, i + 1, "destination id");
    if (src < 0 || dst < 0) throw ParseError("negative node id", i + 1);
    if (src >= g.num_nodes || dst >= g.num_nodes) {
      throw ConsistencyError("edge (" + std::to_string(src) + ", " + std::to_string(dst) +
                             ") on line " + std::to_string(i + 1) + " references a node outside [0, " +
                             std::to_string(g.num_nodes) + ") given by the feature file");
    }
    push(static_cast<Index>(src), static_cast<Index>(dst));
    if (options.undirected) push(static_cast<Index>(dst), static_cast<Index>(src));
  }

  const auto label_lines = read_lines(label_path);
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const std::string line = strip(label_lines[i]);
    if (line.empty()) continue;
    g.labels.push_back(static_cast<int>(parse_int(line, i + 1, "label")));
  }
  if (static_cast<Index>(g.labels.size()) != g.num_nodes) {
    throw ConsistencyError("label file has " + std::to_string(g.labels.size()) + " entries for " +
                           std::to_string(g.num_nodes) + " nodes");
  }

  if (mask_path) {
    const auto mask_lines = read_lines(*mask_path);
    for (std::size_t i = 0; i < mask_lines.size(); ++i) {
      const std::string line = strip(mask_lines[i]);
      if (line.empty()) continue;
      g.split.push_back(parse_split(line, i + 1));
    }
    if (static_cast<Index>(g.split.size()) != g.num_nodes) {
      throw ConsistencyError("mask file has " + std::to_string(g.split.size()) + " entries for " +
                             std::to_string(g.num_nodes) + " nodes");
    }
  } else {
    std::vector<Index> all(static_cast<std::size_t>(g.num_nodes));
    std::iota(all.begin(), all.end(), Index{0});
    assign_split(g, all, options.split_seed);
  }
  return g;
}

void write_graph(const Graph& g, const std::filesystem::path& edge_path,
                 const std::filesystem::path& feature_path, const std::filesystem::path& label_path,
                 const std::filesystem::path& mask_path) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(edge_path);
    for (const Edge& e : g.edges) out << e.src << ' ' << e.dst << '\n';
  }
  {
    auto out = open(feature_path);
    char buf[64];
    for (Index r = 0; r < g.features.rows(); ++r) {
      for (Index c = 0; c < g.features.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", g.features(r, c));
        out << (c ? "," : "") << buf;
      }
      out << '\n';
    }
  }
  {
    auto out = open(label_path);
    for (int y : g.labels) out << y << '\n';
  }
  {
    auto out = open(mask_path);
    for (Split s : g.split) out << split_name(s) << '\n';
  }
}

Graph add_self_loops(Graph g) {
  std::vector<char> has(static_cast<std::size_t>(g.num_nodes), 0);
  for (const Edge& e : g.edges) {
    if (e.src == e.dst) has[static_cast<std::size_t>(e.src)] = 1;
  }
  for (Index i = 0; i < g.num_nodes; ++i) {
    if (!has[static_cast<std::size_t>(i)]) g.edges.push_back({i, i});
  }
  return g;
}

void assign_split(Graph& g, const std::vector<Index>& nodes, std::uint64_t seed) {
  if (g.split.size() != static_cast<std::size_t>(g.num_nodes)) {
    g.split.assign(static_cast<std::size_t>(g.num_nodes), Split::none);
  }
  std::vector<Index> order = nodes;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::lround(0.6 * n));
  const auto n_val = static_cast<std::size_t>(std::lround(0.2 * n));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    g.split[static_cast<std::size_t>(order[i])] = s;
  }
}

Graph merge_disjoint(const std::vector<Graph>& graphs) {
  Graph out;
  if (graphs.empty()) return out;
  Index total = 0;
  for (const Graph& g : graphs) total += g.num_nodes;
  out.num_nodes = total;
  out.features.resize(total, graphs.front().feature_dim());
  Index offset = 0;
  for (const Graph& g : graphs) {
    if (g.feature_dim() != out.features.cols()) {
      throw ShapeError("merge_disjoint: feature widths " + std::to_string(out.features.cols()) +
                       " and " + std::to_string(g.feature_dim()) + " differ");
    }
    out.features.middleRows(offset, g.num_nodes) = g.features;
    for (const Edge& e : g.edges) out.edges.push_back({e.src + offset, e.dst + offset});
    out.labels.insert(out.labels.end(), g.labels.begin(), g.labels.end());
    out.split.insert(out.split.end(), g.split.begin(), g.split.end());
    offset += g.num_nodes;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators

GraphCollection gen_dictionary_lookup(const DictionaryLookupOptions& options) {
  const Index k = options.k;
  if (k < 2) throw ParameterError("dictionary lookup needs k >= 2, got " + std::to_string(k));
  if (options.num_graphs < 1) throw ParameterError("dictionary lookup needs at least one graph");
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> value_dist(0, static_cast<int>(k) - 1);

  GraphCollection out;
  out.task = Task::node_classification;
  for (Index gi = 0; gi < options.num_graphs; ++gi) {
    Graph g;
    g.num_nodes = 2 * k;
    g.features = Tensor::Zero(2 * k, 2 * k);
    g.labels.assign(static_cast<std::size_t>(2 * k), 0);
    std::vector<int> value(static_cast<std::size_t>(k));
    for (Index key = 0; key < k; ++key) {
      value[static_cast<std::size_t>(key)] = value_dist(rng);
      g.features(key, key) = 1.0;
      g.features(key, k + value[static_cast<std::size_t>(key)]) = 1.0;
      g.labels[static_cast<std::size_t>(key)] = value[static_cast<std::size_t>(key)];
    }
    std::vector<Index> designated(static_cast<std::size_t>(k));
    std::iota(designated.begin(), designated.end(), Index{0});
    std::shuffle(designated.begin(), designated.end(), rng);
    std::vector<Index> queries;
    for (Index q = 0; q < k; ++q) {
      const Index node = k + q;
      const Index key = designated[static_cast<std::size_t>(q)];
      g.features(node, key) = 1.0;
      g.labels[static_cast<std::size_t>(node)] = value[static_cast<std::size_t>(key)];
      queries.push_back(node);
    }
    for (Index q = k; q < 2 * k; ++q) {
      for (Index key = 0; key < k; ++key) {
        g.edges.push_back({q, key});
        g.edges.push_back({key, q});
      }
    }
    assign_split(g, queries, rng());
    out.graphs.push_back(std::move(g));
  }
  return out;
}

Graph gen_sbm(const SbmOptions& o) {
  if (o.blocks < 1 || o.per_block < 1) throw ParameterError("SBM needs positive block sizes");
  if (!(0.0 <= o.p_out && o.p_out < o.p_in && o.p_in <= 1.0)) {
    throw ParameterError("SBM probabilities must satisfy 0 <= p_out < p_in <= 1");
  }
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.feature_noise);

  Graph g;
  g.num_nodes = o.blocks * o.per_block;
  g.labels.resize(static_cast<std::size_t>(g.num_nodes));
  for (Index i = 0; i < g.num_nodes; ++i) {
    g.labels[static_cast<std::size_t>(i)] = static_cast<int>(i / o.per_block);
  }
  for (Index i = 0; i < g.num_nodes; ++i) {
    for (Index j = i + 1; j < g.num_nodes; ++j) {
      const bool same = g.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(j)];
      if (coin(rng) < (same ? o.p_in : o.p_out)) {
        g.edges.push_back({i, j});
        g.edges.push_back({j, i});
      }
    }
  }
  g.features = Tensor::Zero(g.num_nodes, o.blocks);
  for (Index i = 0; i < g.num_nodes; ++i) {
    g.features(i, g.labels[static_cast<std::size_t>(i)]) = 1.0;
    if (o.feature_noise > 0) {
      for (Index c = 0; c < o.blocks; ++c) g.features(i, c) += noise(rng);
    }
  }
  std::vector<Index> all(static_cast<std::size_t>(g.num_nodes));
  std::iota(all.begin(), all.end(), Index{0});
  assign_split(g, all, rng());
  return g;
}

LinkSplit split_edges(const Graph& g, std::uint64_t seed) {
  std::set<std::pair<Index, Index>> pairs;
  for (const Edge& e : g.edges) {
    if (e.src != e.dst) pairs.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)});
  }
  std::vector<std::pair<Index, Index>> order(pairs.begin(), pairs.end());
  if (order.size() < 5) throw ParameterError("link split needs at least 5 undirected edges");
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * n)));
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * n)));

  LinkSplit out;
  out.train_graph = g;
  out.train_graph.edges.clear();
  std::set<std::pair<Index, Index>> held;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Edge e{order[i].first, order[i].second};
    if (i < n_val) {
      out.val_pos.push_back(e);
      held.insert(order[i]);
    } else if (i < n_val + n_test) {
      out.test_pos.push_back(e);
      held.insert(order[i]);
    } else {
      out.train_pos.push_back(e);
    }
  }
  for (const Edge& e : g.edges) {
    if (!held.count({std::min(e.src, e.dst), std::max(e.src, e.dst)})) {
      out.train_graph.edges.push_back(e);
    }
  }

  const Index nn = g.num_nodes;
  const auto possible = static_cast<std::size_t>(nn * (nn - 1) / 2);
  const std::size_t wanted = out.train_pos.size() + out.val_pos.size() + out.test_pos.size();
  if (possible < pairs.size() + wanted) {
    throw ParameterError("graph too dense to sample " + std::to_string(wanted) + " negatives");
  }
  std::uniform_int_distribution<Index> node(0, nn - 1);
  std::set<std::pair<Index, Index>> used;
  auto draw = [&](std::vector<Edge>& into, std::size_t count) {
    while (into.size() < count) {
      Index a = node(rng), b = node(rng);
      if (a == b) continue;
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      if (pairs.count(key) || used.count(key)) continue;
      used.insert(key);
      into.push_back({key.first, key.second});
    }
  };
  draw(out.train_neg, out.train_pos.size());
  draw(out.val_neg, out.val_pos.size());
  draw(out.test_neg, out.test_pos.size());
  return out;
}

}  // namespace kaa
