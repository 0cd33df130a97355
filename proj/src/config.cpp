#include "kaa/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace kaa {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError("malformed section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    cfg.values_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParameterError("override '" + assignment + "' is not of the form key=value");
  }
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParameterError("'" + key + "' expects a number, got '" + it->second + "'");
}

long Config::get_int(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParameterError("'" + key + "' expects an integer, got '" + it->second + "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ParameterError("'" + key + "' expects true or false, got '" + it->second + "'");
}

std::string Config::to_text() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      sections[""][key] = value;
    } else {
      sections[key.substr(0, dot)][key.substr(dot + 1)] = value;
    }
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, entries] : sections) {
    if (!section.empty()) {
      if (!first) out << '\n';
      out << '[' << section << "]\n";
    }
    for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
    first = false;
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string> kKnownKeys = {
    "data.source",        "data.k",
    "data.num_graphs",    "data.seed",
    "data.blocks",        "data.per_block",
    "data.p_in",          "data.p_out",
    "data.feature_noise", "data.edges",
    "data.features",      "data.labels",
    "data.mask",          "data.undirected",
    "data.task",          "model.backbone",
    "model.variant",      "model.layers",
    "model.hidden",       "model.heads",
    "model.gamma",        "model.proj_dim",
    "model.dropout",      "model.attention_dropout",
    "model.value_transform", "model.kan_grid",
    "model.kan_order",    "model.kan_range_min",
    "model.kan_range_max", "model.kan_residual",
    "model.kan_normalize", "model.kan_hidden",
    "train.lr",           "train.weight_decay",
    "train.epochs",       "train.patience",
    "train.seed",         "output.dir",
};

GraphCollection load_data(const Config& cfg, std::string& name) {
  const std::string source = cfg.get("data.source", "dictlookup");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 0));
  if (source == "dictlookup") {
    DictionaryLookupOptions o;
    o.k = cfg.get_int("data.k", 5);
    o.num_graphs = cfg.get_int("data.num_graphs", 1);
    o.seed = seed;
    name = "dictlookup(k=" + std::to_string(o.k) + ",graphs=" + std::to_string(o.num_graphs) + ")";
    return gen_dictionary_lookup(o);
  }
  if (source == "sbm") {
    SbmOptions o;
    o.blocks = cfg.get_int("data.blocks", o.blocks);
    o.per_block = cfg.get_int("data.per_block", o.per_block);
    o.p_in = cfg.get_double("data.p_in", o.p_in);
    o.p_out = cfg.get_double("data.p_out", o.p_out);
    o.feature_noise = cfg.get_double("data.feature_noise", o.feature_noise);
    o.seed = seed;
    GraphCollection c;
    c.task = task_from_string(cfg.get("data.task", "node_classification"));
    c.graphs.push_back(gen_sbm(o));
    name = "sbm(blocks=" + std::to_string(o.blocks) + ",per_block=" + std::to_string(o.per_block) + ")";
    return c;
  }
  if (source == "files") {
    for (const char* key : {"data.edges", "data.features", "data.labels"}) {
      if (!cfg.has(key)) throw ParameterError(std::string("file data source needs '") + key + "'");
    }
    std::optional<std::filesystem::path> mask;
    if (cfg.has("data.mask")) mask = cfg.get("data.mask", "");
    LoadOptions lo;
    lo.undirected = cfg.get_bool("data.undirected", false);
    lo.split_seed = seed;
    GraphCollection c;
    c.task = task_from_string(cfg.get("data.task", "node_classification"));
    if (c.task == Task::graph_classification) {
      throw ParameterError("file data source supports node and link tasks");
    }
    c.graphs.push_back(load_graph(cfg.get("data.edges", ""), cfg.get("data.features", ""),
                                  cfg.get("data.labels", ""), mask, lo));
    name = cfg.get("data.edges", "");
    return c;
  }
  throw ParameterError("unknown data source '" + source + "'");
}

}  // namespace

TrainSetup train_setup_from_config(const Config& cfg) {
  for (const auto& [key, value] : cfg.values()) {
    if (!kKnownKeys.count(key)) throw ParameterError("unknown config key '" + key + "'");
  }
  TrainSetup s;
  s.data = load_data(cfg, s.dataset);

  ModelConfig& m = s.model;
  m.num_layers = static_cast<int>(cfg.get_int("model.layers", m.num_layers));
  m.hidden_dim = cfg.get_int("model.hidden", m.hidden_dim);
  m.heads = cfg.get_int("model.heads", m.heads);
  m.dropout = cfg.get_double("model.dropout", m.dropout);
  m.attention_dropout = cfg.get_bool("model.attention_dropout", m.attention_dropout);
  m.value_transform = cfg.get_bool("model.value_transform", m.value_transform);
  m.task_head = default_head(s.data.task);
  ScoringConfig& sc = m.scoring;
  sc.backbone = backbone_from_string(cfg.get("model.backbone", to_string(sc.backbone)));
  sc.variant = variant_from_string(cfg.get("model.variant", to_string(sc.variant)));
  sc.gamma = cfg.get_double("model.gamma", sc.gamma);
  sc.proj_dim = cfg.get_int("model.proj_dim", sc.proj_dim);
  sc.kan_hidden = cfg.get_int("model.kan_hidden", sc.kan_hidden);
  sc.kan.grid_size = static_cast<int>(cfg.get_int("model.kan_grid", sc.kan.grid_size));
  sc.kan.order = static_cast<int>(cfg.get_int("model.kan_order", sc.kan.order));
  sc.kan.range_min = cfg.get_double("model.kan_range_min", sc.kan.range_min);
  sc.kan.range_max = cfg.get_double("model.kan_range_max", sc.kan.range_max);
  sc.kan.residual = cfg.get_bool("model.kan_residual", sc.kan.residual);
  sc.kan.normalize_inputs = cfg.get_bool("model.kan_normalize", sc.kan.normalize_inputs);
  m.validate();
  ScoringConfig probe = sc;
  probe.in_dim = 1;
  probe.validate();

  TrainConfig& t = s.train;
  t.lr = cfg.get_double("train.lr", t.lr);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.patience = static_cast<int>(cfg.get_int("train.patience", t.patience));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  if (!(t.lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (t.epochs < 1) throw ParameterError("epochs must be positive");

  s.out_dir = cfg.get("output.dir", "runs");
  return s;
}

}  // namespace kaa
