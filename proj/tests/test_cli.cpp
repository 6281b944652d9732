#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "oodreg/config.hpp"
#include "oodreg/errors.hpp"
#include "oodreg/manifest.hpp"

using namespace oodreg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One scratch root per process: ctest runs each case in its own process.
const fs::path kRoot = fs::temp_directory_path() / ("oodreg_cli_tests_" + std::to_string(getpid()));

struct RemoveRootAtExit {
  ~RemoveRootAtExit() {
    std::error_code ec;
    fs::remove_all(kRoot, ec);
  }
} remove_root_at_exit;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(OODREG_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  std::ofstream(kRoot / name, std::ios::binary) << text;
  return kRoot / name;
}

const char* kSmallGeometry =
    R"("geometry": {"id_points_per_class": 60, "ood_points_per_component": 30})";

std::string small_config(const std::string& objective, double dropout = 0.0) {
  return std::string(R"({"config_version": 1, "objective": ")") + objective +
         R"(", "epochs": 5, "layer_dims": [2, 16, 16, 3], "dropout_rate": )" +
         std::to_string(dropout) + ", " + kSmallGeometry +
         R"(, "eval": {"grid_resolution": 10, "histogram_bins": 5, "mc_passes": 4}})";
}

// Generates one shared small dataset.
const fs::path& data_dir() {
  static const fs::path dir = [] {
    const fs::path cfg = write("gen.json", small_config("ce"));
    const fs::path out = kRoot / "data";
    EXPECT_EQ(run("gen-data --config " + cfg.string() + " --out " + out.string()), 0);
    return out;
  }();
  return dir;
}

}  // namespace

TEST(Config, RoundTripAndStrictKeys) {
  RunConfig c = run_config_from_json(small_config("cosine_margin", 0.2));
  EXPECT_EQ(c.train.objective, Objective::cosine_margin);
  EXPECT_EQ(c.train.epochs, 5u);
  EXPECT_EQ(c.geometry.id_points_per_class, 60u);
  EXPECT_EQ(c.eval.mc_passes, 4u);
  c.train.init_seed = 99;
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));
  EXPECT_EQ(back.train.init_seed, 99u);

  EXPECT_THROW(run_config_from_json(R"({"config_version": 1, "epoch": 3})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"config_version": 2})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"epochs": 3})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"config_version": 1, "epochs": "three"})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"config_version": 1, "objective_params": {"beta": 1}})"),
               ConfigError);
  EXPECT_THROW(run_config_from_json("{"), ConfigError);
}

TEST(Config, GridFiles) {
  const auto grid = grid_from_json(R"([{"lambda": 0}, {"lambda": 1, "gamma": -0.2}])");
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_EQ(grid[1].at("gamma"), -0.2);
  EXPECT_THROW(grid_from_json("[]"), ConfigError);
  EXPECT_THROW(grid_from_json(R"({"lambda": 1})"), ConfigError);
  EXPECT_THROW(grid_from_json(R"([{"lambda": "x"}])"), ConfigError);
}

TEST(Manifest, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, GenDataWritesFiveSplitsDeterministically) {
  const fs::path& data = data_dir();
  for (const char* name : {"train", "val", "test_id", "test_ood", "train_ood"}) {
    EXPECT_TRUE(fs::exists(data / (std::string(name) + ".csv"))) << name;
  }
  const fs::path cfg = kRoot / "gen.json";
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + (kRoot / "data2").string()), 0);
  for (const char* name : {"train.csv", "test_ood.csv"}) {
    EXPECT_EQ(sha256_file(data / name), sha256_file(kRoot / "data2" / name));
  }
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --seed 5 --out " + (kRoot / "data3").string()), 0);
  EXPECT_NE(sha256_file(data / "train.csv"), sha256_file(kRoot / "data3" / "train.csv"));
  EXPECT_EQ(slurp(data / "train.csv").substr(0, 12), slurp(kRoot / "data3" / "train.csv").substr(0, 12));
  // Manifest lists every output with a hash.
  const json m = json::parse(slurp(data / "manifest.json"));
  ASSERT_EQ(m["files"].size(), 5u);
  for (const auto& f : m["files"]) {
    EXPECT_EQ(f["sha256"], sha256_file(data / f["path"].get<std::string>()));
  }
}

TEST(Cli, TrainIsReproducible) {
  const fs::path cfg = write("cc.json", small_config("ce_cosine", 0.2));
  const std::string base = "train --config " + cfg.string() + " --data " + data_dir().string();
  ASSERT_EQ(run(base + " --out " + (kRoot / "t1").string()), 0);
  ASSERT_EQ(run(base + " --out " + (kRoot / "t2").string()), 0);
  for (const char* f : {"model.json", "history.json", "config.json"}) {
    EXPECT_EQ(sha256_file(kRoot / "t1" / f), sha256_file(kRoot / "t2" / f)) << f;
  }
}

TEST(Cli, MissingOodStreamIsAStructuredDataError) {
  const fs::path partial = kRoot / "no_ood";
  fs::create_directories(partial);
  for (const char* name : {"train.csv", "val.csv", "test_id.csv", "test_ood.csv"}) {
    fs::copy_file(data_dir() / name, partial / name, fs::copy_options::overwrite_existing);
  }
  const fs::path cfg = write("cm.json", small_config("cosine_margin"));
  const std::string cmd = std::string(OODREG_CLI) + " train --config " + cfg.string() + " --data " +
                          partial.string() + " --out " + (kRoot / "t3").string() + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string output;
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = pclose(pipe);
  EXPECT_EQ(WEXITSTATUS(status), 3);
  EXPECT_NE(output.find("train_ood.csv"), std::string::npos) << output;
}

TEST(Cli, EvalReportsAllScoresAndWarnsWithoutDropout) {
  const fs::path ce_cfg = write("ce.json", small_config("ce"));
  ASSERT_EQ(run("train --config " + ce_cfg.string() + " --data " + data_dir().string() + " --out " +
                (kRoot / "ce").string()),
            0);
  const std::string eval = "eval --model " + (kRoot / "ce" / "model.json").string() + " --data " +
                           data_dir().string() + " --grid-resolution 8 --bins 4";
  ASSERT_EQ(run(eval + " --mahalanobis --out " + (kRoot / "ev").string()), 0);
  const json r = json::parse(slurp(kRoot / "ev" / "results.json"));
  for (const char* k : {"confidence", "entropy", "mutual_information", "mahalanobis"}) {
    ASSERT_TRUE(r["auc"].contains(k)) << k;
    EXPECT_GE(r["auc"][k].get<double>(), 0.0);
    EXPECT_LE(r["auc"][k].get<double>(), 100.0);
  }
  EXPECT_EQ(r["auc"]["mutual_information"].get<double>(), 50.0);
  EXPECT_EQ(r["warnings"].size(), 1u);
  EXPECT_TRUE(r.contains("accuracy") && r.contains("manifest"));
  for (const char* f : {"histograms.csv", "decision_grid_confidence.csv", "scores_entropy.csv"}) {
    EXPECT_TRUE(fs::exists(kRoot / "ev" / f)) << f;
  }
  ASSERT_EQ(run(eval + " --mahalanobis --out " + (kRoot / "ev2").string()), 0);
  EXPECT_EQ(slurp(kRoot / "ev" / "results.json"), slurp(kRoot / "ev2" / "results.json"));
  EXPECT_EQ(slurp(kRoot / "ev" / "histograms.csv"), slurp(kRoot / "ev2" / "histograms.csv"));

  ASSERT_EQ(run(eval + " --scores entropy --out " + (kRoot / "ev3").string()), 0);
  const json only = json::parse(slurp(kRoot / "ev3" / "results.json"));
  EXPECT_EQ(only["auc"].size(), 1u);
  EXPECT_EQ(run(eval + " --scores bogus --out " + (kRoot / "ev4").string()), 2);
}

TEST(Cli, CorruptEvalTableHasTwentyFiveCells) {
  const fs::path cfg = write("ce2.json", small_config("ce"));
  ASSERT_EQ(run("train --config " + cfg.string() + " --data " + data_dir().string() + " --out " +
                (kRoot / "ce2").string()),
            0);
  ASSERT_EQ(run("corrupt-eval --model " + (kRoot / "ce2" / "model.json").string() + " --data " +
                data_dir().string() + " --out " + (kRoot / "cor").string()),
            0);
  const json r = json::parse(slurp(kRoot / "cor" / "corruption.json"));
  std::size_t cells = 0;
  double total = 0.0;
  for (const auto& [kind, row] : r["errors"].items()) {
    double sum = 0.0;
    for (const auto& [s, v] : row.items()) {
      ++cells;
      sum += v.get<double>();
    }
    total += sum / 5.0;
  }
  EXPECT_EQ(cells, 25u);
  EXPECT_NEAR(r["mce"].get<double>(), total, 0.02);
}

TEST(Cli, SweepLeaderboardIsDeterministicUnderParallelism) {
  const fs::path cfg = write("sw.json", small_config("ce_cosine"));
  const fs::path grid = write("grid.json", R"([{"lambda": 0}, {"lambda": 1}])");
  const std::string base = "sweep --config " + cfg.string() + " --grid " + grid.string() +
                           " --data " + data_dir().string();
  ASSERT_EQ(run(base + " --jobs 1 --out " + (kRoot / "s1").string()), 0);
  ASSERT_EQ(run(base + " --jobs 2 --out " + (kRoot / "s2").string()), 0);
  const json lb = json::parse(slurp(kRoot / "s1" / "leaderboard.json"));
  EXPECT_EQ(lb["leaderboard"].size(), 2u);
  EXPECT_EQ(slurp(kRoot / "s1" / "leaderboard.json"), slurp(kRoot / "s2" / "leaderboard.json"));
  EXPECT_EQ(sha256_file(kRoot / "s1" / "model.json"), sha256_file(kRoot / "s2" / "model.json"));
  EXPECT_EQ(run("sweep --config " + cfg.string() + " --grid " + write("empty.json", "[]").string() +
                " --data " + data_dir().string() + " --out " + (kRoot / "s3").string()),
            2);
}

TEST(Cli, ExperimentRerunIsByteIdentical) {
  const fs::path cfg = write("ex.json", small_config("cosine_margin", 0.2));
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out " + (kRoot / "x1").string()), 0);
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out " + (kRoot / "x2").string()), 0);
  const json m = json::parse(slurp(kRoot / "x1" / "manifest.json"));
  ASSERT_GT(m["files"].size(), 5u);
  for (const auto& f : m["files"]) {
    const std::string name = f["path"].get<std::string>();
    EXPECT_EQ(sha256_file(kRoot / "x1" / name), sha256_file(kRoot / "x2" / name)) << name;
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("train --config " + (kRoot / "nope.json").string() + " --data x"), 2);
  EXPECT_EQ(run("eval --model " + (kRoot / "nope.json").string() + " --data " + data_dir().string()), 3);
  const fs::path diverge = write(
      "div.json", R"({"config_version": 1, "epochs": 30, "learning_rate": 1e6, "momentum": 0.99, )" +
                      std::string(kSmallGeometry) + "}");
  EXPECT_EQ(run("train --config " + diverge.string() + " --data " + data_dir().string() + " --out " +
                (kRoot / "div").string()),
            4);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, OutputRootFromEnvironment) {
  data_dir();
  const fs::path root = kRoot / "envroot";
  setenv("OODREG_OUT", root.c_str(), 1);
  EXPECT_EQ(run("gen-data --config " + (kRoot / "gen.json").string()), 0);
  unsetenv("OODREG_OUT");
  EXPECT_TRUE(fs::exists(root / "gen-data" / "train.csv"));
}
