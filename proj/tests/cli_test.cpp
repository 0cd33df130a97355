#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "kaa/cli.hpp"
#include "kaa/config.hpp"

using namespace kaa;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("kaa_cli_test_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }
  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST(Config, ParsesSectionsAndComments) {
  const Config c = Config::parse("top = 1\n# note\n[model]\nbackbone = gat  # trailing\n\n[train]\nlr=0.01\n");
  EXPECT_EQ(c.get("top", ""), "1");
  EXPECT_EQ(c.get("model.backbone", ""), "gat");
  EXPECT_DOUBLE_EQ(c.get_double("train.lr", 0.0), 0.01);
  EXPECT_EQ(c.get_int("train.epochs", 7), 7);
}

TEST(Config, ParseErrorsCarryLine) {
  try {
    Config::parse("[model]\nbackbone gat\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(Config::parse("[model\n"), ParseError);
  EXPECT_THROW(Config::parse("= 3\n"), ParseError);
}

TEST(Config, TypedGettersRejectGarbage) {
  const Config c = Config::parse("[a]\nx = 1.5e\ny = 3.2\nz = maybe\n");
  EXPECT_THROW(c.get_double("a.x", 0), ParameterError);
  EXPECT_THROW(c.get_int("a.y", 0), ParameterError);
  EXPECT_THROW(c.get_bool("a.z", false), ParameterError);
}

TEST(Config, TextRoundTripAndOverrides) {
  Config c = Config::parse("[train]\nlr = 0.01\nepochs = 3\n[model]\nvariant = kaa\n");
  EXPECT_EQ(Config::parse(c.to_text()), c);
  c.apply_override("train.lr=0.5");
  c.apply_override("output.dir = somewhere");
  EXPECT_EQ(c.get("train.lr", ""), "0.5");
  EXPECT_EQ(c.get("output.dir", ""), "somewhere");
  EXPECT_EQ(Config::parse(c.to_text()), c);
  EXPECT_THROW(c.apply_override("novalue"), ParameterError);
}

TEST(Config, TrainSetupResolvesKeys) {
  const Config c = Config::parse(
      "[data]\nsource = dictlookup\nk = 4\nnum_graphs = 3\n"
      "[model]\nbackbone = glcn\nvariant = kaa\nlayers = 3\nhidden = 16\nkan_grid = 8\nkan_order = 2\n"
      "[train]\nlr = 0.01\nepochs = 7\nseed = 4\n");
  const TrainSetup s = train_setup_from_config(c);
  EXPECT_EQ(s.model.scoring.backbone, Backbone::glcn);
  EXPECT_EQ(s.model.scoring.variant, Variant::kaa);
  EXPECT_EQ(s.model.num_layers, 3);
  EXPECT_EQ(s.model.hidden_dim, 16);
  EXPECT_EQ(s.model.scoring.kan.grid_size, 8);
  EXPECT_EQ(s.model.scoring.kan.order, 2);
  EXPECT_EQ(s.train.epochs, 7);
  EXPECT_EQ(s.train.seed, 4u);
  EXPECT_EQ(s.data.graphs.size(), 3u);
  EXPECT_EQ(s.out_dir, fs::path("runs"));
}

TEST(Config, TrainSetupRejectsBadInput) {
  EXPECT_THROW(train_setup_from_config(Config::parse("[model]\nbackbon = gat\n")), ParameterError);
  EXPECT_THROW(train_setup_from_config(Config::parse("[model]\nbackbone = gcn\n")), ParameterError);
  EXPECT_THROW(train_setup_from_config(Config::parse("[train]\nlr = 0\n")), ParameterError);
  EXPECT_THROW(train_setup_from_config(Config::parse("[data]\nsource = files\n")), ParameterError);
}

TEST_F(CliTest, BoundsTable) {
  const Result r = run_cli({"bounds", "--d", "2..4", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("2.23607"), std::string::npos);
  EXPECT_NE(r.out.find("0.70711"), std::string::npos);
  EXPECT_NE(r.out.find("7.71362"), std::string::npos);
  EXPECT_NE(r.out.find("4.12311"), std::string::npos);
  const json j = json::parse(read(dir_ / "bounds.json"));
  ASSERT_EQ(j["rows"].size(), 3u);
  EXPECT_EQ(j["rows"][0]["mlp_lower_status"], "analytic, unverified");
  EXPECT_EQ(run_cli({"bounds", "--d", "4..2"}).code, 2);
}

TEST_F(CliTest, MrdLinearReport) {
  const Result r = run_cli({"mrd", "--family", "lt", "--d", "2", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_GE(j["oracle"].get<double>(), 2.23607);
  EXPECT_EQ(j["mode"], "exhaustive");
  EXPECT_EQ(j["config"]["family"], "lt");
  EXPECT_TRUE(fs::exists(dir_ / "mrd_lt_d2.json"));
}

TEST_F(CliTest, MrdReportsAreStableWithoutTiming) {
  for (const char* family : {"lt", "mlp", "kaa"}) {
    json a = json::parse(run_cli({"mrd", "--family", family, "--d", "3", "--sampled", "300", "--seed", "2"}).out);
    json b = json::parse(run_cli({"mrd", "--family", family, "--d", "3", "--sampled", "300", "--seed", "2"}).out);
    a.erase("elapsed_ms");
    b.erase("elapsed_ms");
    EXPECT_EQ(a.dump(), b.dump()) << family;
    EXPECT_EQ(a["mode"], "sampled");
  }
}

TEST_F(CliTest, MrdFamiliesAndErrors) {
  const json kaa = json::parse(run_cli({"mrd", "--family", "kaa", "--d", "3"}).out);
  EXPECT_LE(kaa["oracle"].get<double>(), 1e-12);
  const json mlp = json::parse(run_cli({"mrd", "--family", "mlp", "--d", "2"}).out);
  EXPECT_LE(mlp["oracle"].get<double>(), 2.23607 + 1e-9);
  EXPECT_EQ(mlp["lower_bound_status"], "analytic, unverified");
  EXPECT_EQ(run_cli({"mrd", "--family", "lt", "--d", "4"}).code, 2);
  EXPECT_EQ(run_cli({"mrd", "--family", "gcn", "--d", "2"}).code, 2);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"fly"}).code, 2);
  EXPECT_EQ(run_cli({"bounds", "--d", "2", "--bogus"}).code, 2);
  const Result r = run_cli({"mrd"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(CliTest, IoErrors) {
  EXPECT_EQ(run_cli({"train", "--config", (dir_ / "missing.cfg").string()}).code, 3);
  EXPECT_EQ(run_cli({"train", "--config", write("bad.cfg", "[model\n").string()}).code, 3);
  write("blocker", "x");
  EXPECT_EQ(run_cli({"gen", "--task", "sbm", "--out", (dir_ / "blocker" / "sub").string()}).code, 3);
}

TEST_F(CliTest, GradcheckSingleOp) {
  const Result r = run_cli({"gradcheck", "--op", "score/gat/kaa", "--points", "5"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("score/gat/kaa"), std::string::npos);
  EXPECT_EQ(run_cli({"gradcheck", "--op", "score/nothing/kaa"}).code, 2);
}

TEST_F(CliTest, Probe) {
  const Result gat = run_cli({"probe", "--backbone", "gat", "--samples", "50"});
  ASSERT_EQ(gat.code, 0) << gat.err;
  EXPECT_NE(gat.out.find("static fraction 1.0000"), std::string::npos);
  const Result mod = run_cli({"probe", "--backbone", "gat_modified", "--samples", "50"});
  EXPECT_EQ(mod.out.find("static fraction 1.0000"), std::string::npos);
}

TEST_F(CliTest, GenThenTrainFromFilesIsReproducible) {
  const fs::path data = dir_ / "data";
  const Result g = run_cli({"gen", "--task", "sbm", "--blocks", "3", "--per-block", "8", "--seed", "5",
                            "--out", data.string()});
  ASSERT_EQ(g.code, 0) << g.err;
  for (const char* f : {"edges.txt", "features.txt", "labels.txt", "mask.txt", "gen.json"}) {
    EXPECT_TRUE(fs::exists(data / f)) << f;
  }
  const fs::path cfg = write("run.cfg",
                             "[data]\nsource = files\nedges = " + (data / "edges.txt").string() +
                                 "\nfeatures = " + (data / "features.txt").string() +
                                 "\nlabels = " + (data / "labels.txt").string() +
                                 "\nmask = " + (data / "mask.txt").string() +
                                 "\n[model]\nvariant = kaa\nhidden = 8\n[train]\nepochs = 5\n");
  const Result a = run_cli({"train", "--config", cfg.string(), "--override",
                            "output.dir=" + (dir_ / "a").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = run_cli({"train", "--config", cfg.string(), "--override",
                            "output.dir=" + (dir_ / "b").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  json ra = json::parse(read(dir_ / "a" / "report.json"));
  json rb = json::parse(read(dir_ / "b" / "report.json"));
  EXPECT_EQ(ra["loss_curve"], rb["loss_curve"]);
  EXPECT_EQ(ra["metrics"], rb["metrics"]);
  EXPECT_EQ(ra["loss_curve"].size(), 5u);
  // The embedded config is the exact resolved text, overrides included.
  const Config echoed = Config::parse(ra["run_config"].get<std::string>());
  EXPECT_EQ(echoed.get("output.dir", ""), (dir_ / "a").string());
  EXPECT_EQ(echoed.get("model.variant", ""), "kaa");
  ra.erase("run_config");
  rb.erase("run_config");
  EXPECT_EQ(ra.dump(), rb.dump());
}

TEST_F(CliTest, TrainRejectsUnknownKey) {
  const fs::path cfg = write("bad.cfg", "[model]\nbackbone = gat\nflavour = spicy\n");
  const Result r = run_cli({"train", "--config", cfg.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.flavour"), std::string::npos);
}
