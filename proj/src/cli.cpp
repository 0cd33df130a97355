#include "kaa/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "kaa/config.hpp"
#include "kaa/gnn.hpp"
#include "kaa/gradcheck.hpp"
#include "kaa/mrd.hpp"

namespace kaa::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fixed(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const int v = std::stoi(text);
      return {v, v};
    }
    return {std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ParameterError("range '" + text + "' must look like 3 or 2..4");
  }
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string task = "dictlookup";
  Index k = 5;
  Index num_graphs = 1;
  Index blocks = 2;
  Index per_block = 10;
  double p_in = 0.5;
  double p_out = 0.05;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  Graph g;
  json cfg{{"task", a.task}, {"seed", a.seed}};
  if (a.task == "dictlookup") {
    DictionaryLookupOptions o{a.k, a.num_graphs, a.seed};
    g = merge_disjoint(gen_dictionary_lookup(o).graphs);
    cfg["k"] = a.k;
    cfg["num_graphs"] = a.num_graphs;
  } else if (a.task == "sbm") {
    SbmOptions o;
    o.blocks = a.blocks;
    o.per_block = a.per_block;
    o.p_in = a.p_in;
    o.p_out = a.p_out;
    o.seed = a.seed;
    g = gen_sbm(o);
    cfg["blocks"] = a.blocks;
    cfg["per_block"] = a.per_block;
    cfg["p_in"] = a.p_in;
    cfg["p_out"] = a.p_out;
  } else {
    throw ParameterError("unknown generator '" + a.task + "'");
  }
  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_graph(g, dir / "edges.txt", dir / "features.txt", dir / "labels.txt", dir / "mask.txt");
  json report{{"kind", "gen"}, {"config", cfg}, {"num_nodes", g.num_nodes},
              {"num_edges", g.edges.size()}, {"feature_dim", g.feature_dim()}};
  write_file(dir / "gen.json", report.dump(2));
  out << "wrote " << g.num_nodes << " nodes and " << g.edges.size() << " edges to " << dir.string()
      << "\n";
  return kOk;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              std::ostream& out) {
  Config cfg = Config::load(config_path);
  for (const auto& o : overrides) cfg.apply_override(o);
  const TrainSetup setup = train_setup_from_config(cfg);
  const TrainResult result = train(setup.model, setup.data, setup.train);
  json report = json::parse(run_report_json(setup.model, setup.train, result, setup.dataset));
  report["run_config"] = cfg.to_text();
  write_file(setup.out_dir / "report.json", report.dump(2));
  out << "dataset " << setup.dataset << "  epochs " << result.epochs_run << "  best epoch "
      << result.best_epoch << "\n";
  out << "test accuracy " << fixed("%.4f", result.metrics.accuracy) << "  test roc_auc "
      << fixed("%.4f", result.metrics.roc_auc) << "\n";
  out << "report " << (setup.out_dir / "report.json").string() << "\n";
  return kOk;
}

struct MrdArgs {
  std::string family = "lt";
  int d = 2;
  std::optional<std::size_t> sampled;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_mrd(const MrdArgs& a, std::ostream& out) {
  const MrdFamily family = mrd_family_from_string(a.family);
  const Tensor P = build_circulant_P(a.d);
  MrdOptions opts;
  opts.sampled = a.sampled;
  opts.seed = a.seed;
  MrdReport report;
  switch (family) {
    case MrdFamily::lt: report = mrd_bruteforce_lt(P, opts); break;
    case MrdFamily::mlp: report = mlp_construction_worst_case(P, opts); break;
    case MrdFamily::kaa:
      if (!opts.sampled && a.d > 2) opts.sampled = 1000;
      report = kaa_mrd(P, opts);
      break;
  }
  json j = json::parse(to_json(report));
  j["config"] = {{"family", a.family}, {"d", a.d}, {"seed", a.seed},
                 {"sampled", a.sampled ? json(*a.sampled) : json(nullptr)}};
  if (!a.out.empty()) write_file(fs::path(a.out) / ("mrd_" + a.family + "_d" + std::to_string(a.d) + ".json"), j.dump(2));
  out << j.dump(2) << "\n";
  return kOk;
}

int cmd_bounds(const std::string& range, const std::string& out_dir, std::ostream& out) {
  const auto [lo, hi] = parse_range(range);
  if (lo < 2 || hi < lo) throw ParameterError("bounds need 2 <= d_min <= d_max");
  json rows = json::array();
  out << "   d     N      LT lower     MLP lower     MLP upper\n";
  for (int d = lo; d <= hi; ++d) {
    const Index n = static_cast<Index>(d) * d;
    const double lt = bound_lt(n, d);
    const MlpBounds mlp = bound_mlp(n, d);
    char line[128];
    std::snprintf(line, sizeof line, "%4d %5ld %13.5f %13.5f %13.5f\n", d, static_cast<long>(n), lt,
                  mlp.lower, mlp.upper);
    out << line;
    rows.push_back({{"d", d}, {"N", n}, {"lt_lower", lt}, {"mlp_lower", mlp.lower},
                    {"mlp_lower_status", "analytic, unverified"}, {"mlp_upper", mlp.upper}});
  }
  if (!out_dir.empty()) {
    json j{{"kind", "bounds"}, {"config", {{"d", range}}}, {"rows", rows}};
    write_file(fs::path(out_dir) / "bounds.json", j.dump(2));
  }
  return kOk;
}

int cmd_gradcheck(bool all, const std::string& op, int points, std::uint64_t seed,
                  const std::string& out_dir, std::ostream& out) {
  std::vector<std::string> names;
  if (all || op.empty()) {
    names = gradcheck_cases();
  } else {
    names.push_back(op);
  }
  json rows = json::array();
  double worst = 0.0;
  for (const auto& name : names) {
    const GradcheckResult r = run_gradcheck_case(name, points, seed);
    worst = std::max(worst, r.max_rel_error);
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %12.3e %4d\n", name.c_str(), r.max_rel_error, r.points);
    out << line;
    rows.push_back({{"name", name}, {"max_rel_error", r.max_rel_error}, {"points", r.points},
                    {"rejected", r.rejected}});
  }
  out << "max relative error " << fixed("%.3e", worst) << "\n";
  if (!out_dir.empty()) {
    json j{{"kind", "gradcheck"},
           {"config", {{"cases", names}, {"points", points}, {"seed", seed}}},
           {"results", rows},
           {"max_rel_error", worst}};
    write_file(fs::path(out_dir) / "gradcheck.json", j.dump(2));
  }
  return worst < 1e-4 ? kOk : kFailure;
}

struct ProbeArgs {
  std::string backbone = "gat";
  int samples = 200;
  Index queries = 5;
  Index keys = 5;
  Index dim = 4;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  ScoringConfig cfg;
  cfg.backbone = backbone_from_string(a.backbone);
  cfg.in_dim = a.dim;
  cfg.validate();
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor q(a.queries, a.dim), k(a.keys, a.dim);
  for (Index i = 0; i < q.size(); ++i) q(i) = n(rng);
  for (Index i = 0; i < k.size(); ++i) k(i) = n(rng);
  const double frac = static_attention_probe(cfg, q, k, a.samples, a.seed + 1);
  out << "static fraction " << fixed("%.4f", frac) << " over " << a.samples << " samples\n";
  if (!a.out.empty()) {
    json j{{"kind", "probe"},
           {"config", {{"backbone", a.backbone}, {"samples", a.samples}, {"queries", a.queries},
                       {"keys", a.keys}, {"dim", a.dim}, {"seed", a.seed}}},
           {"static_fraction", frac}};
    write_file(fs::path(a.out) / ("probe_" + a.backbone + ".json"), j.dump(2));
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kolmogorov-Arnold attention toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic graph dataset");
  g->add_option("--task", gen.task, "dictlookup or sbm")->check(CLI::IsMember({"dictlookup", "sbm"}));
  g->add_option("--k", gen.k, "Dictionary size");
  g->add_option("--num-graphs", gen.num_graphs, "Dictionary graphs");
  g->add_option("--blocks", gen.blocks, "SBM blocks");
  g->add_option("--per-block", gen.per_block, "SBM nodes per block");
  g->add_option("--p-in", gen.p_in, "SBM intra-block edge probability");
  g->add_option("--p-out", gen.p_out, "SBM inter-block edge probability");
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out, "Output directory")->required();

  std::string config_path;
  std::vector<std::string> overrides;
  auto* t = app.add_subcommand("train", "Train a model from a config file");
  t->add_option("--config", config_path, "key=value config file")->required();
  t->add_option("--override", overrides, "section.key=value, applied after the file");

  MrdArgs mrd;
  auto* m = app.add_subcommand("mrd", "Maximum ranking distance of a scoring family");
  m->add_option("--family", mrd.family)->check(CLI::IsMember({"lt", "mlp", "kaa"}));
  m->add_option("--d", mrd.d)->required();
  m->add_option("--sampled", mrd.sampled, "Random targets instead of exhaustive enumeration");
  m->add_option("--seed", mrd.seed);
  m->add_option("--out", mrd.out);

  std::string range, bounds_out;
  auto* b = app.add_subcommand("bounds", "Closed-form MRD bounds");
  b->add_option("--d", range, "d or d_min..d_max")->required();
  b->add_option("--out", bounds_out);

  bool gc_all = false;
  std::string gc_op, gc_out;
  int gc_points = 20;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_flag("--all", gc_all);
  gc->add_option("--op", gc_op, "Single case, e.g. score/gat/kaa or kan/order3/grid4");
  gc->add_option("--points", gc_points);
  gc->add_option("--seed", gc_seed);
  gc->add_option("--out", gc_out);

  ProbeArgs probe;
  auto* p = app.add_subcommand("probe", "Static-attention probe");
  p->add_option("--backbone", probe.backbone)->check(CLI::IsMember({"gat", "gat_modified"}));
  p->add_option("--samples", probe.samples);
  p->add_option("--queries", probe.queries);
  p->add_option("--keys", probe.keys);
  p->add_option("--dim", probe.dim);
  p->add_option("--seed", probe.seed);
  p->add_option("--out", probe.out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (t->parsed()) return cmd_train(config_path, overrides, out);
    if (m->parsed()) return cmd_mrd(mrd, out);
    if (b->parsed()) return cmd_bounds(range, bounds_out, out);
    if (gc->parsed()) return cmd_gradcheck(gc_all, gc_op, gc_points, gc_seed, gc_out, out);
    if (p->parsed()) return cmd_probe(probe, out);
  } catch (const TheoremCheckFailure& e) {
    err << "theorem check failed: " << e.what() << "\n";
    return kTheorem;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const kaa::ParseError& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const ConsistencyError& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  err << "usage error: no subcommand\n";
  return kUsage;
}

}  // namespace kaa::cli
