#pragma once

// Reproducible experiment runs: a JSON config, one runner per CLI subcommand
// and a manifest per run. Every random stream derives from `seed`:
//   dataset  derive_seed(seed, "dataset")   scene i: derive_seed(., "scene", i)
//   weights  derive_seed(seed, "init")
//   training derive_seed(seed, "train")
//   analysis derive_seed(seed, "analysis")  gradient / noise / sample streams
//   demo     derive_seed(seed, "demo")

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trajsens/attribution.hpp"
#include "trajsens/planner.hpp"
#include "trajsens/scene.hpp"

namespace trajsens {

inline constexpr const char* kVersion = "0.1.0";

enum class DatasetSource { Auto, Generate, Directory };

struct DatasetConfig {
  /// Auto: `path` if set, else <out>/scenes when it exists, else generate.
  DatasetSource source = DatasetSource::Auto;
  int count = 300;
  std::string path;
  ScenarioConfig scenario;
};

struct PredictorConfig {
  int hidden = 32;
  int latent = 8;
  int modes = 3;
  DynamicsMode dynamics = DynamicsMode::IntegrateActions;
};

/// A perturbation with its target written as text, resolved against a scene:
///   state_history_all | image | graph_weights | graph_nodes[:NODE]
///   state_cell:AGENT:DIM:STEP  (AGENT an id or "target", DIM a state name,
///                               STEP an index, negative counting from the end)
struct SpecConfig {
  PerturbKind kind = PerturbKind::Constant;
  std::string feature = "state_history_all";
  double magnitude = 0.5;
  bool absolute = false;
  std::uint64_t seed = 0;
};

FeatureId resolve_feature(const std::string& text, const SceneInput& scene);
PerturbSpec resolve_spec(const SpecConfig& spec, const SceneInput& scene);

struct DemoAttack {
  std::string name;
  std::vector<SpecConfig> specs;
};

struct PlanDemoConfig {
  ScenarioConfig scenario;  // the car-following scene that is attacked
  std::uint64_t scene_seed = 42;
  PlanTemplate plan;
  std::vector<DemoAttack> attacks;
};

struct ModeSwitchConfig {
  int scene = 0;
  std::string feature = "image";
  std::vector<double> epsilons;
};

struct AnalysisConfig {
  RangeSource ranges = RangeSource::Fixed;
  ModeSelection::Kind mode_selection = ModeSelection::Kind::MostLikely;
  std::vector<SpecConfig> perturbations;
  PerturbKind depth_kind = PerturbKind::Constant;
  double depth_magnitude = 0.5;
  std::vector<double> sweep_epsilons;
  ModeSwitchConfig mode_switch;
  PlanDemoConfig plan_demo;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  PredictorConfig predictor;
  TrainConfig training;
  AnalysisConfig analysis;
  std::string checkpoint;  // empty: <out>/checkpoint.txt
  int workers = 1;
};

/// The configuration behind the shipped results: 300 car-following scenes,
/// Adam for 150 epochs, and every analysis enabled.
ExperimentConfig reference_config();

std::string config_to_json(const ExperimentConfig& config);
/// Throws ConfigError naming the offending key; unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// `key.sub=value` override; the value is read as JSON, or as a string if it is not JSON.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// FNV-1a of the canonical config with `workers` removed, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
std::string file_hash(const std::filesystem::path& path);

struct RunRecord {
  std::string subcommand;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

/// Each runner writes under `out` and finishes with manifest_<subcommand>.json.
RunRecord run_gen_data(const ExperimentConfig& config, const std::filesystem::path& out);
RunRecord run_train(const ExperimentConfig& config, const std::filesystem::path& out);
RunRecord run_analyze(const ExperimentConfig& config, const std::filesystem::path& out);
RunRecord run_depth(const ExperimentConfig& config, const std::filesystem::path& out);
RunRecord run_sweep(const ExperimentConfig& config, const std::filesystem::path& out);
RunRecord run_plan_demo(const ExperimentConfig& config, const std::filesystem::path& out);
RunRecord run_report(const ExperimentConfig& config, const std::filesystem::path& out);

/// Dispatches by subcommand name; throws ConfigError for an unknown one.
RunRecord run_subcommand(const std::string& name, const ExperimentConfig& config,
                         const std::filesystem::path& out);

}  // namespace trajsens
