// trajsens: data generation, training, sensitivity analyses, planning demo
// and reporting. Exit codes: 0 ok, 1 runtime error, 2 configuration error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trajsens/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> count;
  std::vector<std::string> sets;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity attribution for trajectory predictors"};
  app.require_subcommand(1, 1);
  Options opt;
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the resolved config as JSON and exit");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config (default: reference config)");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Global seed");
    sub->add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--set", opt.sets, "Override KEY=VALUE (dotted keys, JSON values)");
  };
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"gen-data", "Generate car-following scenes into OUT/scenes"},
      {"train", "Train the reference predictor"},
      {"analyze", "Percent-increase scores for every configured perturbation"},
      {"depth", "Per (dimension, step) sensitivity of the target's history"},
      {"sweep", "Image FGSM epsilon sweep and mode-switch count"},
      {"plan-demo", "Plan before and after each configured attack"},
      {"report", "Tables, plot data and SVG boxplots from the score files"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (std::string(name) == "gen-data") sub->add_option("--count", opt.count, "Number of scenes");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    trajsens::ExperimentConfig config = opt.config_path.empty()
                                            ? trajsens::reference_config()
                                            : trajsens::load_config(opt.config_path);
    for (const auto& s : opt.sets) trajsens::apply_override(config, s);
    if (opt.seed) config.seed = *opt.seed;
    if (opt.workers) config.workers = *opt.workers;
    if (opt.count) {
      if (*opt.count < 1) throw trajsens::ConfigError("--count: must be >= 1");
      config.dataset.count = *opt.count;
    }
    if (print_config) {
      std::cout << trajsens::config_to_json(config);
      return 0;
    }
    const trajsens::RunRecord record = trajsens::run_subcommand(command, config, opt.out);
    std::cout << command << ": config " << trajsens::config_hash(config) << ", wrote "
              << record.outputs.size() << " file(s) to " << opt.out << "\n";
    return 0;
  } catch (const trajsens::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const trajsens::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
