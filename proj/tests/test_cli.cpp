#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "rgnn/cli.hpp"
#include "support/temp_dir.hpp"

using namespace rgnn;
using oracle::TempDir;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "rgnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::string kMutag = std::string(RGNN_DATA_DIR) + "/MUTAG";

std::vector<std::string> small_model() { return {"--hidden-dim", "8", "--blocks", "1"}; }

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, ParsePrintsPublishedAverages) {
  const CliResult r = run({"parse", "--dataset", kMutag});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mean nodes  17.93"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mean edges  19.79"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("graphs      188"), std::string::npos) << r.out;
}

TEST(Cli, TrainWithZeroEpochsLogsInitialMetricsOnly) {
  TempDir tmp;
  const CliResult r = run(concat({"train", "--dataset", kMutag, "--mode", "baseline", "--epochs", "0", "--out",
                                  tmp.path().string()},
                                 small_model()));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string log = oracle::read_file(tmp.path() / "runs/MUTAG/gine/baseline/eps0_zeta0/seed0.log");
  std::istringstream lines(log);
  std::vector<std::string> types;
  for (std::string line; std::getline(lines, line);) types.push_back(nlohmann::json::parse(line).at("type"));
  EXPECT_EQ(types, (std::vector<std::string>{"config", "epoch", "result"}));
}

TEST(Cli, TrainLogsAreByteIdenticalOnRepeat) {
  TempDir a, b;
  const auto args = [&](const TempDir& d) {
    return concat({"train", "--dataset", kMutag, "--mode", "adaptive", "--epsilon", "0.3", "--zeta", "0.3",
                   "--epochs", "4", "--seeds", "2", "--out", d.path().string()},
                  small_model());
  };
  ASSERT_EQ(run(args(a)).code, 0);
  ASSERT_EQ(run(args(b)).code, 0);
  for (const char* seed : {"seed0.log", "seed1.log"}) {
    const auto rel = std::filesystem::path("runs/MUTAG/gine/adaptive/eps0.3_zeta0.3") / seed;
    const std::string la = oracle::read_file(a.path() / rel);
    EXPECT_FALSE(la.empty());
    EXPECT_EQ(la, oracle::read_file(b.path() / rel));
  }
}

TEST(Cli, ReportReproducesSweepCsv) {
  TempDir tmp;
  const CliResult s = run(concat({"sweep", "--dataset", kMutag, "--modes", "sparse,fixed", "--epsilons",
                                  "0.1,0.3,0.5,0.7", "--zetas", "0.1", "--epochs", "1", "--seeds", "2", "--out",
                                  tmp.path().string()},
                                 small_model()));
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "zeta_table.csv"));
  const CliResult r = run({"report", "--out", tmp.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string sweep_csv = oracle::read_file(tmp.path() / "results.csv");
  EXPECT_EQ(oracle::read_file(tmp.path() / "report/results.csv"), sweep_csv);
  EXPECT_EQ(r.out, sweep_csv);
  EXPECT_EQ(oracle::read_file(tmp.path() / "report/param_table.csv"),
            oracle::read_file(tmp.path() / "param_table.csv"));
  EXPECT_EQ(oracle::read_file(tmp.path() / "report/zeta_table.csv"), oracle::read_file(tmp.path() / "zeta_table.csv"));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"fly"}).code, 2);
  EXPECT_EQ(run({"train", "--bogus", "1"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", kMutag, "--epsilon", "1.5"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", kMutag, "--model", "gat"}).code, 2);
  EXPECT_EQ(run({"train", "--epochs", "0"}).code, 2);  // no dataset
  EXPECT_EQ(run({"train", "--dataset", kMutag, "--config", "/nonexistent/cfg.yaml"}).code, 2);
}

TEST(Cli, RuntimeFailuresExitOne) {
  TempDir tmp;
  EXPECT_EQ(run({"parse", "--dataset", (tmp.path() / "missing").string()}).code, 1);
  oracle::write_file(tmp.path() / "BROKEN" / "BROKEN_A.txt", "1, 2\n");
  const CliResult r = run({"parse", "--dataset", (tmp.path() / "BROKEN").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("BROKEN_graph_indicator.txt"), std::string::npos) << r.err;
  EXPECT_EQ(run({"report", "--out", (tmp.path() / "nothing").string()}).code, 1);
}

TEST(Cli, HelpExitsZero) {
  const CliResult r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sweep"), std::string::npos);
}

TEST(Config, EmptyFileGivesDefaults) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "");
  const RunSettings s = load_config(tmp.path() / "c.yaml");
  const RunSettings d;
  EXPECT_EQ(s.train.lr, d.train.lr);
  EXPECT_EQ(s.train.max_epochs, 300u);
  EXPECT_EQ(s.train.batch_size, 32u);
  EXPECT_EQ(s.train.mode, Mode::baseline);
  EXPECT_EQ(s.seeds, 1u);
  EXPECT_EQ(s.epsilons, d.epsilons);
}

TEST(Config, OutOfRangeEpsilonIsRejected) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "# sparsity\nepsilon: 1.5\n");
  try {
    load_config(tmp.path() / "c.yaml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Config, ZetaModeMapsToAdaptiveController) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "zeta_mode: adaptive\nzeta_init: 0.3\nwindow: 4\n");
  const RunSettings s = load_config(tmp.path() / "c.yaml");
  EXPECT_EQ(s.train.mode, Mode::adaptive);
  const ControllerConfig c = s.train.controller_config();
  EXPECT_EQ(c.zeta_init, 0.3);
  EXPECT_EQ(c.window, 4u);
}

TEST(Config, UnknownKeysAreListed) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "epsilon: 0.1\nfoo: 1\nbar: 2\n");
  try {
    load_config(tmp.path() / "c.yaml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("foo"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bar"), std::string::npos) << msg;
  }
}

TEST(Config, MalformedFileReportsLine) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "epsilon: 0.1\nzeta: [0.1\nseed: 3\n");
  try {
    load_config(tmp.path() / "c.yaml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("c.yaml:"), std::string::npos) << e.what();
  }
  oracle::write_file(tmp.path() / "d.yaml", "just text\n");
  EXPECT_THROW(load_config(tmp.path() / "d.yaml"), ConfigError);
}

TEST(Config, ListsAcceptYamlSequences) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "epsilons: [0.1, 0.5]\nzetas: 0.2, 0.4\nmodes: [sparse, adaptive]\n");
  const RunSettings s = load_config(tmp.path() / "c.yaml");
  EXPECT_EQ(s.epsilons, (std::vector<double>{0.1, 0.5}));
  EXPECT_EQ(s.zetas, (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(s.modes, (std::vector<Mode>{Mode::sparse, Mode::adaptive}));
}

TEST(Config, FlagsOverrideFileOverridesDefaults) {
  TempDir tmp;
  oracle::write_file(tmp.path() / "c.yaml", "epochs: 0\nseed: 5\nhidden_dim: 8\nblocks: 1\nout: " +
                                                (tmp.path() / "from_file").string() + "\n");
  const CliResult r = run({"train", "--config", (tmp.path() / "c.yaml").string(), "--dataset", kMutag, "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed 9:"), std::string::npos) << r.out;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "from_file/runs/MUTAG/gine/baseline/eps0_zeta0/seed9.log"));
}

TEST(Config, EveryFlagHasAConfigKey) {
  const CliResult help = run({"--help-all"});
  ASSERT_EQ(help.code, 0);
  std::set<std::string> keys;
  for (const SettingInfo& info : setting_keys()) keys.insert(info.key);
  std::size_t flags = 0;
  std::istringstream in(help.out);
  for (std::string token; in >> token;) {
    if (token.rfind("--", 0) != 0 || token == "--help" || token == "--help-all" || token == "--config") continue;
    std::string key = token.substr(2);
    key = key.substr(0, key.find_first_of(" =,"));
    std::replace(key.begin(), key.end(), '-', '_');
    EXPECT_TRUE(keys.contains(key)) << token;
    ++flags;
  }
  EXPECT_GT(flags, 20u);
  RunSettings s;
  EXPECT_THROW(apply_setting(s, "nope", "1"), ConfigError);
}
