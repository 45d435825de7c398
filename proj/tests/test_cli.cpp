#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "trajsens_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run(const std::string& args) {
  static int counter = 0;
  const fs::path out = root() / ("stdout_" + std::to_string(counter));
  const fs::path err = root() / ("stderr_" + std::to_string(counter++));
  const std::string cmd = std::string("\"") + TRAJSENS_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = read_file(out);
  o.err = read_file(err);
  return o;
}

// Reference config shrunk to a few seconds of work.
const fs::path& small_config() {
  static const fs::path path = [] {
    const Outcome printed = run("--print-config train");
    Json j = Json::parse(printed.out);
    j["dataset"]["count"] = 12;
    j["dataset"]["scenario"]["image_size"] = 8;
    j["analysis"]["plan_demo"]["scenario"]["image_size"] = 8;
    j["predictor"]["hidden"] = 8;
    j["training"]["epochs"] = 2;
    Json specs = Json::array();
    for (const auto& s : j["analysis"]["perturbations"]) {
      if (specs.size() < 6) specs.push_back(s);
    }
    specs.push_back({{"kind", "fgsm"}, {"feature", "image"}, {"magnitude", 0.05}, {"absolute", true}, {"seed", 0}});
    j["analysis"]["perturbations"] = specs;
    j["analysis"]["sweep"]["epsilons"] = Json::array({0.0, 0.01, 0.1});
    const fs::path p = root() / "small.json";
    std::ofstream(p) << j.dump(1);
    return p;
  }();
  return path;
}

std::string args(const std::string& sub, const fs::path& out, const std::string& extra = "") {
  return sub + " --config \"" + small_config().string() + "\" --out \"" + out.string() + "\" " + extra;
}

// gen-data then train once; later tests copy the results.
const fs::path& trained_dir() {
  static const fs::path dir = [] {
    const fs::path d = root() / "trained";
    EXPECT_EQ(run(args("gen-data", d)).code, 0);
    EXPECT_EQ(run(args("train", d)).code, 0);
    return d;
  }();
  return dir;
}

fs::path copy_trained(const std::string& name) {
  const fs::path d = root() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  fs::copy(trained_dir() / "scenes", d / "scenes");
  fs::copy_file(trained_dir() / "checkpoint.txt", d / "checkpoint.txt");
  return d;
}

}  // namespace

TEST(Cli, FullPipeline) {
  const fs::path d = copy_trained("pipeline");
  EXPECT_EQ(fs::directory_iterator(d / "scenes") != fs::directory_iterator(), true);
  EXPECT_TRUE(fs::exists(trained_dir() / "loss_curve.csv"));
  for (const char* sub : {"analyze", "depth", "sweep", "plan-demo", "report"}) {
    const Outcome o = run(args(sub, d));
    EXPECT_EQ(o.code, 0) << sub << ": " << o.err;
    EXPECT_TRUE(fs::exists(d / ("manifest_" + std::string(sub) + ".json"))) << sub;
  }
  for (const char* f : {"analyze_records.csv", "depth_records.csv", "sweep_records.csv", "mode_switch.csv",
                        "plan_demo.csv", "plan_demo.json", "report_analyze_table.csv",
                        "report_depth_boxplot.svg", "report_sweep_plotdata.json"}) {
    EXPECT_TRUE(fs::exists(d / f)) << f;
  }
  const Json m = Json::parse(read_file(d / "manifest_analyze.json"));
  EXPECT_EQ(m["subcommand"], "analyze");
  EXPECT_TRUE(m.contains("config_hash"));
  EXPECT_TRUE(m.contains("versions"));
  const std::string records = read_file(d / "analyze_records.csv");
  EXPECT_EQ(records.substr(0, records.find('\n')), "feature,kind,epsilon,n,q1,q2,q3,mean,zero_baseline_count");
  EXPECT_EQ(std::count(records.begin(), records.end(), '\n'), 8);
}

TEST(Cli, MissingCheckpointIsConfigError) {
  const fs::path d = root() / "no_ckpt";
  fs::create_directories(d);
  const Outcome o = run(args("analyze", d));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("missing checkpoint"), std::string::npos) << o.err;
}

TEST(Cli, RerunsAreByteIdenticalAcrossWorkerCounts) {
  const fs::path a = copy_trained("det_a");
  const fs::path b = copy_trained("det_b");
  ASSERT_EQ(run(args("analyze", a, "--workers 1")).code, 0);
  ASSERT_EQ(run(args("analyze", b, "--workers 2")).code, 0);
  for (const char* f : {"analyze_records.csv", "analyze_scores.json"}) {
    const std::string x = read_file(a / f);
    EXPECT_FALSE(x.empty());
    EXPECT_EQ(x, read_file(b / f)) << f;
  }
  const Json ma = Json::parse(read_file(a / "manifest_analyze.json"));
  const Json mb = Json::parse(read_file(b / "manifest_analyze.json"));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
  EXPECT_NE(ma["workers"], mb["workers"]);
}

TEST(Cli, TrainingIsReproducible) {
  const fs::path d = root() / "retrain";
  fs::remove_all(d);
  fs::create_directories(d);
  fs::copy(trained_dir() / "scenes", d / "scenes");
  ASSERT_EQ(run(args("train", d, "--workers 2")).code, 0);
  EXPECT_EQ(read_file(d / "checkpoint.txt"), read_file(trained_dir() / "checkpoint.txt"));
}

TEST(Cli, SeedOptionOverridesConfig) {
  const Outcome x = run("--print-config train --config \"" + small_config().string() + "\"");
  const Outcome y = run("--print-config train --config \"" + small_config().string() + "\" --seed 5");
  ASSERT_EQ(x.code, 0);
  ASSERT_EQ(y.code, 0);
  EXPECT_NE(x.out, y.out);
  EXPECT_EQ(Json::parse(y.out)["seed"], 5);
}

TEST(Cli, BadInputsExitWithTwo) {
  const fs::path d = root() / "bad";
  EXPECT_EQ(run(args("train", d, "--set nonexistent.key=3")).code, 2);
  EXPECT_EQ(run(args("train", d, "--set training.epochs")).code, 2);
  EXPECT_EQ(run(args("train", d, "--set training.optimizer=\\\"rmsprop\\\"")).code, 2);
  EXPECT_EQ(run(args("gen-data", d, "--count 0")).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --config \"" + (root() / "missing.json").string() + "\"").code, 2);

  Json j = Json::parse(read_file(small_config()));
  j["training"]["learning_rat"] = 0.1;
  const fs::path typo = root() / "typo.json";
  std::ofstream(typo) << j.dump();
  const Outcome o = run("train --config \"" + typo.string() + "\" --out \"" + d.string() + "\"");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("learning_rat"), std::string::npos) << o.err;
}
