#include "trajsens/experiment.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "trajsens/report.hpp"
#include "trajsens/seed.hpp"

namespace trajsens {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// --- enum names ----------------------------------------------------------------

std::string_view source_name(DatasetSource s) {
  switch (s) {
    case DatasetSource::Auto: return "auto";
    case DatasetSource::Generate: return "generate";
    case DatasetSource::Directory: return "directory";
  }
  return "?";
}

DatasetSource parse_source(const std::string& s) {
  for (auto v : {DatasetSource::Auto, DatasetSource::Generate, DatasetSource::Directory}) {
    if (source_name(v) == s) return v;
  }
  throw ConfigError("dataset.source: unknown value '" + s + "'");
}

std::string_view range_source_name(RangeSource r) {
  return r == RangeSource::Fixed ? "fixed" : "dataset";
}

RangeSource parse_range_source(const std::string& s) {
  if (s == "fixed") return RangeSource::Fixed;
  if (s == "dataset") return RangeSource::Dataset;
  throw ConfigError("analysis.ranges: unknown value '" + s + "'");
}

std::string_view selection_name(ModeSelection::Kind k) {
  return k == ModeSelection::Kind::MostLikely ? "most_likely" : "sample";
}

ModeSelection::Kind parse_selection(const std::string& s) {
  if (s == "most_likely") return ModeSelection::Kind::MostLikely;
  if (s == "sample") return ModeSelection::Kind::Sample;
  throw ConfigError("analysis.mode_selection: unknown value '" + s + "'");
}

template <class F>
auto as_config_error(const std::string& key, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

// --- strict object reader --------------------------------------------------------

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key_path(key) + ": wrong type");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(key_path(k.c_str()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// --- to/from JSON ----------------------------------------------------------------

Json scenario_json(const ScenarioConfig& c) {
  return Json{{"history_steps", c.history_steps},   {"horizon", c.horizon},
              {"dt", c.dt},                         {"lead_speed", c.lead_speed},
              {"speed_jitter", c.speed_jitter},     {"gap", c.gap},
              {"lane_heading", c.lane_heading},     {"random_heading", c.random_heading},
              {"max_turn_rate", c.max_turn_rate},   {"stop_probability", c.stop_probability},
              {"position_noise", c.position_noise}, {"velocity_noise", c.velocity_noise},
              {"future_noise", c.future_noise},     {"origin_spread", c.origin_spread},
              {"image_size", c.image_size},         {"image_channels", c.image_channels},
              {"min_edge_weight", c.min_edge_weight}, {"max_edge_weight", c.max_edge_weight}};
}

ScenarioConfig read_scenario(const Json& j, const std::string& path, ScenarioConfig c) {
  Reader r(j, path);
  r.get("history_steps", c.history_steps);
  r.get("horizon", c.horizon);
  r.get("dt", c.dt);
  r.get("lead_speed", c.lead_speed);
  r.get("speed_jitter", c.speed_jitter);
  r.get("gap", c.gap);
  r.get("lane_heading", c.lane_heading);
  r.get("random_heading", c.random_heading);
  r.get("max_turn_rate", c.max_turn_rate);
  r.get("stop_probability", c.stop_probability);
  r.get("position_noise", c.position_noise);
  r.get("velocity_noise", c.velocity_noise);
  r.get("future_noise", c.future_noise);
  r.get("origin_spread", c.origin_spread);
  r.get("image_size", c.image_size);
  r.get("image_channels", c.image_channels);
  r.get("min_edge_weight", c.min_edge_weight);
  r.get("max_edge_weight", c.max_edge_weight);
  r.finish();
  as_config_error(path, [&] {
    validate(c);
    return 0;
  });
  return c;
}

Json spec_json(const SpecConfig& s) {
  return Json{{"kind", perturb_kind_name(s.kind)},
              {"feature", s.feature},
              {"magnitude", s.magnitude},
              {"absolute", s.absolute},
              {"seed", s.seed}};
}

SpecConfig read_spec(const Json& j, const std::string& path) {
  SpecConfig s;
  Reader r(j, path);
  std::string kind(perturb_kind_name(s.kind));
  r.get("kind", kind);
  s.kind = as_config_error(r.key_path("kind"), [&] { return parse_perturb_kind(kind); });
  r.get("feature", s.feature);
  r.get("magnitude", s.magnitude);
  r.get("absolute", s.absolute);
  r.get("seed", s.seed);
  r.finish();
  if (!(s.magnitude >= 0.0)) throw ConfigError(r.key_path("magnitude") + ": must be >= 0");
  return s;
}

Json specs_json(const std::vector<SpecConfig>& specs) {
  Json a = Json::array();
  for (const auto& s : specs) a.push_back(spec_json(s));
  return a;
}

std::vector<SpecConfig> read_specs(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  std::vector<SpecConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(read_spec(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Json rects_json(const std::vector<Rect>& rects) {
  Json a = Json::array();
  for (const Rect& r : rects) a.push_back(Json::array({r.xmin, r.ymin, r.xmax, r.ymax}));
  return a;
}

std::vector<Rect> read_rects(const Json& j, const std::string& path) {
  std::vector<Rect> out;
  if (!j.is_array()) throw ConfigError(path + ": expected an array of [xmin, ymin, xmax, ymax]");
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 4) throw ConfigError(path + ": expected [xmin, ymin, xmax, ymax]");
    try {
      out.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()});
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path + ": rectangle bounds must be numbers");
    }
  }
  return out;
}

Json to_json(const ExperimentConfig& c) {
  const auto& a = c.analysis;
  Json attacks = Json::array();
  for (const auto& at : a.plan_demo.attacks) {
    attacks.push_back(Json{{"name", at.name}, {"specs", specs_json(at.specs)}});
  }
  const PlanTemplate& pt = a.plan_demo.plan;
  return Json{
      {"seed", c.seed},
      {"workers", c.workers},
      {"checkpoint", c.checkpoint},
      {"dataset",
       {{"source", source_name(c.dataset.source)},
        {"count", c.dataset.count},
        {"path", c.dataset.path},
        {"scenario", scenario_json(c.dataset.scenario)}}},
      {"predictor",
       {{"hidden", c.predictor.hidden},
        {"latent", c.predictor.latent},
        {"modes", c.predictor.modes},
        {"dynamics", dynamics_name(c.predictor.dynamics)}}},
      {"training",
       {{"optimizer", optimizer_name(c.training.optimizer)},
        {"epochs", c.training.epochs},
        {"learning_rate", c.training.learning_rate},
        {"momentum", c.training.momentum},
        {"beta1", c.training.beta1},
        {"beta2", c.training.beta2},
        {"batch_size", c.training.batch_size},
        {"clip_norm", c.training.clip_norm},
        {"weight_decay", c.training.weight_decay}}},
      {"analysis",
       {{"ranges", range_source_name(a.ranges)},
        {"mode_selection", selection_name(a.mode_selection)},
        {"perturbations", specs_json(a.perturbations)},
        {"depth", {{"kind", perturb_kind_name(a.depth_kind)}, {"magnitude", a.depth_magnitude}}},
        {"sweep", {{"epsilons", a.sweep_epsilons}}},
        {"mode_switch",
         {{"scene", a.mode_switch.scene},
          {"feature", a.mode_switch.feature},
          {"epsilons", a.mode_switch.epsilons}}},
        {"plan_demo",
         {{"scene_seed", a.plan_demo.scene_seed},
          {"scenario", scenario_json(a.plan_demo.scenario)},
          {"ego_agent", pt.ego_agent},
          {"goal_offset", {pt.goal_offset.x(), pt.goal_offset.y()}},
          {"free_space", rects_json(pt.free_space)},
          {"epsilon", pt.epsilon},
          {"kappa", pt.kappa},
          {"attacks", std::move(attacks)}}}}}};
}

ExperimentConfig from_json(const Json& j) {
  ExperimentConfig c = reference_config();
  Reader root(j, "");
  root.get("seed", c.seed);
  root.get("workers", c.workers);
  root.get("checkpoint", c.checkpoint);
  if (c.workers < 1) throw ConfigError("workers: must be >= 1");

  if (const Json* d = root.child("dataset")) {
    Reader r(*d, "dataset");
    std::string source(source_name(c.dataset.source));
    r.get("source", source);
    c.dataset.source = parse_source(source);
    r.get("count", c.dataset.count);
    r.get("path", c.dataset.path);
    if (const Json* s = r.child("scenario")) c.dataset.scenario = read_scenario(*s, "dataset.scenario", c.dataset.scenario);
    r.finish();
    if (c.dataset.count < 1) throw ConfigError("dataset.count: must be >= 1");
  }
  if (const Json* p = root.child("predictor")) {
    Reader r(*p, "predictor");
    r.get("hidden", c.predictor.hidden);
    r.get("latent", c.predictor.latent);
    r.get("modes", c.predictor.modes);
    std::string dyn(dynamics_name(c.predictor.dynamics));
    r.get("dynamics", dyn);
    c.predictor.dynamics = as_config_error("predictor.dynamics", [&] { return parse_dynamics(dyn); });
    r.finish();
    if (c.predictor.hidden < 1 || c.predictor.latent < 1 || c.predictor.modes < 1)
      throw ConfigError("predictor: hidden, latent and modes must be >= 1");
  }
  if (const Json* t = root.child("training")) {
    Reader r(*t, "training");
    std::string opt(optimizer_name(c.training.optimizer));
    r.get("optimizer", opt);
    c.training.optimizer = as_config_error("training.optimizer", [&] { return parse_optimizer(opt); });
    r.get("epochs", c.training.epochs);
    r.get("learning_rate", c.training.learning_rate);
    r.get("momentum", c.training.momentum);
    r.get("beta1", c.training.beta1);
    r.get("beta2", c.training.beta2);
    r.get("batch_size", c.training.batch_size);
    r.get("clip_norm", c.training.clip_norm);
    r.get("weight_decay", c.training.weight_decay);
    r.finish();
    if (c.training.epochs < 0 || c.training.batch_size < 1 || !(c.training.learning_rate > 0.0))
      throw ConfigError("training: epochs >= 0, batch_size >= 1 and learning_rate > 0 required");
  }
  if (const Json* an = root.child("analysis")) {
    AnalysisConfig& a = c.analysis;
    Reader r(*an, "analysis");
    std::string ranges(range_source_name(a.ranges));
    r.get("ranges", ranges);
    a.ranges = parse_range_source(ranges);
    std::string sel(selection_name(a.mode_selection));
    r.get("mode_selection", sel);
    a.mode_selection = parse_selection(sel);
    if (const Json* p = r.child("perturbations")) a.perturbations = read_specs(*p, "analysis.perturbations");
    if (const Json* d = r.child("depth")) {
      Reader dr(*d, "analysis.depth");
      std::string kind(perturb_kind_name(a.depth_kind));
      dr.get("kind", kind);
      a.depth_kind = as_config_error("analysis.depth.kind", [&] { return parse_perturb_kind(kind); });
      dr.get("magnitude", a.depth_magnitude);
      dr.finish();
    }
    if (const Json* s = r.child("sweep")) {
      Reader sr(*s, "analysis.sweep");
      sr.get("epsilons", a.sweep_epsilons);
      sr.finish();
    }
    if (const Json* m = r.child("mode_switch")) {
      Reader mr(*m, "analysis.mode_switch");
      mr.get("scene", a.mode_switch.scene);
      mr.get("feature", a.mode_switch.feature);
      mr.get("epsilons", a.mode_switch.epsilons);
      mr.finish();
    }
    if (const Json* p = r.child("plan_demo")) {
      PlanDemoConfig& pd = a.plan_demo;
      Reader pr(*p, "analysis.plan_demo");
      pr.get("scene_seed", pd.scene_seed);
      if (const Json* s = pr.child("scenario"))
        pd.scenario = read_scenario(*s, "analysis.plan_demo.scenario", pd.scenario);
      pr.get("ego_agent", pd.plan.ego_agent);
      std::vector<double> goal{pd.plan.goal_offset.x(), pd.plan.goal_offset.y()};
      pr.get("goal_offset", goal);
      if (goal.size() != 2) throw ConfigError("analysis.plan_demo.goal_offset: expected [x, y]");
      pd.plan.goal_offset = {goal[0], goal[1]};
      if (const Json* f = pr.child("free_space"))
        pd.plan.free_space = read_rects(*f, "analysis.plan_demo.free_space");
      pr.get("epsilon", pd.plan.epsilon);
      pr.get("kappa", pd.plan.kappa);
      if (const Json* at = pr.child("attacks")) {
        if (!at->is_array()) throw ConfigError("analysis.plan_demo.attacks: expected an array");
        pd.attacks.clear();
        for (std::size_t i = 0; i < at->size(); ++i) {
          const std::string path = "analysis.plan_demo.attacks[" + std::to_string(i) + "]";
          Reader ar((*at)[i], path);
          DemoAttack attack;
          ar.get("name", attack.name);
          if (const Json* s = ar.child("specs")) attack.specs = read_specs(*s, path + ".specs");
          ar.finish();
          pd.attacks.push_back(std::move(attack));
        }
      }
      pr.finish();
    }
    r.finish();
  }
  root.finish();
  return c;
}

// --- hashing, files ---------------------------------------------------------------

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char ch : data) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- run plumbing -------------------------------------------------------------------

struct Run {
  const ExperimentConfig& config;
  fs::path out;
  RunRecord record;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  Run(const ExperimentConfig& c, const fs::path& o, const char* name) : config(c), out(o) {
    record.subcommand = name;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error("cannot create output directory " + out.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& text) {
    write_text(out / name, text);
    record.outputs.push_back(out / name);
  }

  RunRecord finish() {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    Json inputs = Json::array();
    for (const auto& p : record.inputs) inputs.push_back(Json{{"path", p.string()}, {"hash", file_hash(p)}});
    Json outputs = Json::array();
    for (const auto& p : record.outputs) outputs.push_back(Json{{"path", p.string()}, {"hash", file_hash(p)}});
    char eigen[32];
    std::snprintf(eigen, sizeof eigen, "%d.%d.%d", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                  EIGEN_MINOR_VERSION);
    const Json manifest{{"subcommand", record.subcommand},
                        {"config_hash", config_hash(config)},
                        {"seed", config.seed},
                        {"workers", config.workers},
                        {"versions", {{"trajsens", kVersion}, {"eigen", eigen}, {"compiler", __VERSION__}}},
                        {"inputs", std::move(inputs)},
                        {"outputs", std::move(outputs)},
                        {"wall_time_seconds", wall}};
    const fs::path path = out / ("manifest_" + record.subcommand + ".json");
    write_text(path, manifest.dump(1) + "\n");
    record.outputs.push_back(path);
    return record;
  }
};

std::vector<SceneInput> load_dataset(Run& run) {
  const DatasetConfig& d = run.config.dataset;
  fs::path dir;
  if (d.source == DatasetSource::Directory || (d.source == DatasetSource::Auto && !d.path.empty())) {
    if (d.path.empty()) throw ConfigError("dataset.path: required for a directory source");
    dir = d.path;
    if (!fs::is_directory(dir)) throw ConfigError("dataset.path: no such directory " + dir.string());
  } else if (d.source == DatasetSource::Auto && fs::is_directory(run.out / "scenes")) {
    dir = run.out / "scenes";
  }
  if (!dir.empty()) {
    run.record.inputs.push_back(dir);
    auto scenes = load_scene_directory(dir);
    if (scenes.empty()) throw ConfigError("dataset: no scenes in " + dir.string());
    return scenes;
  }
  return generate_dataset(derive_seed(run.config.seed, "dataset"), d.count, d.scenario);
}

fs::path checkpoint_path(const ExperimentConfig& c, const fs::path& out) {
  return c.checkpoint.empty() ? out / "checkpoint.txt" : fs::path(c.checkpoint);
}

PredictorParams load_checkpoint(Run& run) {
  const fs::path path = checkpoint_path(run.config, run.out);
  if (!fs::is_regular_file(path)) throw ConfigError("missing checkpoint: " + path.string());
  run.record.inputs.push_back(path);
  return load_params(path);
}

AttributionOptions analysis_options(const ExperimentConfig& c, std::span<const SceneInput> data) {
  AttributionOptions o;
  const std::uint64_t seed = derive_seed(c.seed, "analysis");
  o.selection = c.analysis.mode_selection == ModeSelection::Kind::Sample
                    ? ModeSelection::sample(derive_seed(seed, "sample"))
                    : ModeSelection::most_likely();
  o.ranges = compute_ranges(data, c.analysis.ranges);
  o.seed = seed;
  o.workers = c.workers;
  return o;
}

void write_sets(Run& run, const std::string& name, const std::vector<SensitivitySet>& sets) {
  run.write(name + "_scores.json", serialize_sets(sets));
  run.write(name + "_records.csv", attribution_records(sets));
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(what + ": expected an integer, got '" + s + "'");
}

}  // namespace

// --- features ---------------------------------------------------------------------

FeatureId resolve_feature(const std::string& text, const SceneInput& scene) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty()) throw ConfigError("feature: empty");
  const std::string& head = parts[0];
  FeatureId f;
  if (head == "state_history_all" && parts.size() == 1) {
    f = FeatureId::state_history_all();
  } else if (head == "image" && parts.size() == 1) {
    f = FeatureId::image();
  } else if (head == "graph_weights" && parts.size() == 1) {
    f = FeatureId::graph_weights();
  } else if (head == "graph_nodes" && parts.size() <= 2) {
    int node = -1;
    if (parts.size() == 2) {
      const auto found = scene.graph.find(parts[1]);
      node = found ? *found : parse_int(parts[1], "feature '" + text + "' node");
    }
    f = FeatureId::graph_nodes(node);
  } else if (head == "state_cell" && parts.size() == 4) {
    const int agent = as_config_error("feature '" + text + "'", [&] {
      return parts[1] == "target" ? scene.target_index() : scene.agent_index(parts[1]);
    });
    const auto dim = parse_state_dim(parts[2]);
    if (!dim) throw ConfigError("feature '" + text + "': unknown state dimension '" + parts[2] + "'");
    int step = parse_int(parts[3], "feature '" + text + "' step");
    if (step < 0) step += scene.history_length();
    f = FeatureId::state_cell(agent, *dim, step);
  } else {
    throw ConfigError("feature: cannot parse '" + text + "'");
  }
  as_config_error("feature '" + text + "'", [&] {
    check_feature(scene, f);
    return 0;
  });
  return f;
}

PerturbSpec resolve_spec(const SpecConfig& spec, const SceneInput& scene) {
  return {spec.kind, resolve_feature(spec.feature, scene), spec.magnitude, spec.absolute, spec.seed};
}

// --- config -------------------------------------------------------------------------

ExperimentConfig reference_config() {
  ExperimentConfig c;
  ScenarioConfig& s = c.dataset.scenario;
  s.dt = 1.0;
  s.lead_speed = 11.0;
  s.speed_jitter = 9.0;
  s.random_heading = true;
  s.max_turn_rate = 0.1;
  s.stop_probability = 0.2;
  s.gap = 15.0;

  c.training.optimizer = Optimizer::Adam;
  c.training.epochs = 150;
  c.training.learning_rate = 0.001;
  c.training.batch_size = 16;

  AnalysisConfig& a = c.analysis;
  for (const char* feature : {"state_history_all", "image", "graph_nodes", "graph_weights"}) {
    for (PerturbKind kind : {PerturbKind::Noise, PerturbKind::Occlusion, PerturbKind::Constant,
                             PerturbKind::Gradient, PerturbKind::Fgsm}) {
      a.perturbations.push_back({kind, feature, 0.5, false, 0});
    }
  }
  a.sweep_epsilons = {0.001, 0.01, 0.05, 0.1, 0.5, 1.0};
  a.mode_switch.epsilons = {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0};

  PlanDemoConfig& d = a.plan_demo;
  d.scenario = s;
  d.scenario.lead_speed = 17.6;
  d.scenario.speed_jitter = 0.0;
  d.scenario.random_heading = false;
  d.scenario.max_turn_rate = 0.0;
  d.scenario.stop_probability = 0.0;
  d.scenario.gap = 15.2;
  d.attacks = {
      {"none", {}},
      {"image_fgsm", {{PerturbKind::Fgsm, "image", 20.0, true, 0}}},
      {"velocity_occlusion",
       {{PerturbKind::Occlusion, "state_cell:target:vx:-1", 0.0, false, 0},
        {PerturbKind::Occlusion, "state_cell:target:vy:-1", 0.0, false, 0}}},
  };
  return c;
}

std::string config_to_json(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_json(j);
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config: no such file " + path.string());
  return config_from_json(read_file(path));
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set: expected KEY=VALUE, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  Json j = to_json(config);
  Json* node = &j;
  std::stringstream ss(key);
  std::vector<std::string> parts;
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("--set: unknown key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  *node = std::move(value);
  config = from_json(j);
}

std::string config_hash(const ExperimentConfig& config) {
  Json j = to_json(config);
  j.erase("workers");
  return hex(fnv1a(j.dump()));
}

std::string file_hash(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : files) {
      h = fnv1a(f.filename().string(), h);
      h = fnv1a(read_file(f), h);
    }
    return hex(h);
  }
  return hex(fnv1a(read_file(path)));
}

// --- runners ------------------------------------------------------------------------

RunRecord run_gen_data(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "gen-data");
  const auto scenes = generate_dataset(derive_seed(config.seed, "dataset"), config.dataset.count,
                                       config.dataset.scenario);
  const fs::path dir = out / "scenes";
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%05zu.json", i);
    save_scene(scenes[i], dir / name);
  }
  run.record.outputs.push_back(dir);
  return run.finish();
}

RunRecord run_train(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "train");
  const auto data = load_dataset(run);
  const PredictorConfig& p = config.predictor;
  const PredictorParams initial =
      init_params(dims_for(data.front(), p.hidden, p.latent, p.modes), p.dynamics,
                  derive_seed(config.seed, "init"));
  TrainConfig tc = config.training;
  tc.workers = config.workers;
  const TrainResult result = train(data, initial, tc, derive_seed(config.seed, "train"));

  const fs::path ckpt = checkpoint_path(config, out);
  save_params(result.params, ckpt);
  run.record.outputs.push_back(ckpt);
  std::string curve = "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    curve += std::to_string(e) + "," + format_number(result.loss_curve[e]) + "\n";
  }
  run.write("loss_curve.csv", curve);
  return run.finish();
}

RunRecord run_analyze(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "analyze");
  const PredictorParams params = load_checkpoint(run);
  const auto data = load_dataset(run);
  if (config.analysis.perturbations.empty()) throw ConfigError("analysis.perturbations: empty");
  std::vector<PerturbSpec> specs;
  for (const auto& s : config.analysis.perturbations) specs.push_back(resolve_spec(s, data.front()));
  write_sets(run, "analyze", aggregate(data, params, specs, analysis_options(config, data)));
  return run.finish();
}

RunRecord run_depth(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "depth");
  const PredictorParams params = load_checkpoint(run);
  const auto data = load_dataset(run);
  write_sets(run, "depth",
             depth_analysis(data, params, config.analysis.depth_kind, config.analysis.depth_magnitude,
                            analysis_options(config, data)));
  return run.finish();
}

RunRecord run_sweep(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "sweep");
  const PredictorParams params = load_checkpoint(run);
  const auto data = load_dataset(run);
  const AttributionOptions options = analysis_options(config, data);
  if (config.analysis.sweep_epsilons.empty()) throw ConfigError("analysis.sweep.epsilons: empty");
  write_sets(run, "sweep", as_config_error("analysis.sweep.epsilons", [&] {
               return epsilon_sweep(data, params, config.analysis.sweep_epsilons, options);
             }));

  const ModeSwitchConfig& ms = config.analysis.mode_switch;
  if (!ms.epsilons.empty()) {
    if (ms.scene < 0 || ms.scene >= static_cast<int>(data.size()))
      throw ConfigError("analysis.mode_switch.scene: out of range");
    const SceneInput& scene = data[static_cast<std::size_t>(ms.scene)];
    const ModeSwitchResult r =
        mode_switch_count(scene, params, resolve_feature(ms.feature, scene), ms.epsilons,
                          options.selection, derive_seed(options.seed, "mode-switch"));
    std::string csv = "epsilon,selected_mode";
    for (Eigen::Index k = 0; k < params.dims.modes; ++k) csv += ",weight_" + std::to_string(k);
    csv += "\n";
    for (std::size_t i = 0; i < ms.epsilons.size(); ++i) {
      csv += format_number(ms.epsilons[i]) + "," + std::to_string(r.selected_modes[i]);
      for (Eigen::Index k = 0; k < r.mode_weights[i].size(); ++k) csv += "," + format_number(r.mode_weights[i][k]);
      csv += "\n";
    }
    run.write("mode_switch.csv", csv);
    run.write("mode_switch.json",
              Json{{"feature", ms.feature}, {"scene", ms.scene}, {"switches", r.count}}.dump(1) + "\n");
  }
  return run.finish();
}

RunRecord run_plan_demo(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "plan-demo");
  const PredictorParams params = load_checkpoint(run);
  const PlanDemoConfig& pd = config.analysis.plan_demo;
  if (pd.attacks.empty()) throw ConfigError("analysis.plan_demo.attacks: empty");
  const SceneInput scene = generate_scene(pd.scene_seed, pd.scenario);
  const std::uint64_t seed = derive_seed(config.seed, "demo");
  const ModeSelection selection = config.analysis.mode_selection == ModeSelection::Kind::Sample
                                      ? ModeSelection::sample(derive_seed(seed, "sample"))
                                      : ModeSelection::most_likely();
  const Ranges ranges = config.analysis.ranges == RangeSource::Fixed
                            ? fixed_ranges()
                            : compute_ranges(std::span<const SceneInput>(&scene, 1));
  PlannerOptions options;
  options.seed = derive_seed(seed, "planner");
  options.workers = config.workers;

  std::string csv;
  Json summary = Json::array();
  for (const DemoAttack& attack : pd.attacks) {
    std::vector<PerturbSpec> specs;
    for (const auto& s : attack.specs) specs.push_back(resolve_spec(s, scene));
    const DemoResult r = demo_attack(scene, params, specs, pd.plan, ranges, selection,
                                     derive_seed(seed, "gradient"), options);
    std::istringstream table(r.table);
    std::string line;
    bool header = true;
    while (std::getline(table, line)) {
      if (header) {
        if (csv.empty()) csv = "attack," + line + "\n";
        header = false;
        continue;
      }
      csv += attack.name + "," + line + "\n";
    }
    auto steps = [](const PlanResult& p) {
      Json a = Json::array();
      for (std::size_t t = 1; t < p.states.size(); ++t) a.push_back((p.states[t] - p.states[t - 1]).norm());
      return a;
    };
    summary.push_back(Json{{"attack", attack.name},
                           {"baseline", {{"feasible", r.baseline.feasible},
                                         {"objective", r.baseline.objective},
                                         {"step_lengths", steps(r.baseline)}}},
                           {"attacked", {{"feasible", r.attacked.feasible},
                                         {"objective", r.attacked.objective},
                                         {"step_lengths", steps(r.attacked)}}}});
  }
  run.write("plan_demo.csv", csv);
  run.write("plan_demo.json", summary.dump(1) + "\n");
  return run.finish();
}

RunRecord run_report(const ExperimentConfig& config, const fs::path& out) {
  Run run(config, out, "report");
  bool any = false;
  for (const char* name : {"analyze", "depth", "sweep"}) {
    const fs::path scores = out / (std::string(name) + "_scores.json");
    if (!fs::is_regular_file(scores)) continue;
    any = true;
    run.record.inputs.push_back(scores);
    const auto sets = parse_sets(read_file(scores));
    const std::string prefix = std::string("report_") + name;
    run.write(prefix + "_table.csv", render_report(sets, ReportFormat::Table));
    run.write(prefix + "_transformed.csv", render_report(sets, ReportFormat::TransformedTable));
    run.write(prefix + "_plotdata.json", render_report(sets, ReportFormat::PlotData));
    run.write(prefix + "_boxplot.svg", render_report(sets, ReportFormat::Svg, name));
  }
  if (!any) throw ConfigError("report: no analyze/depth/sweep scores in " + out.string());
  return run.finish();
}

RunRecord run_subcommand(const std::string& name, const ExperimentConfig& config, const fs::path& out) {
  if (name == "gen-data") return run_gen_data(config, out);
  if (name == "train") return run_train(config, out);
  if (name == "analyze") return run_analyze(config, out);
  if (name == "depth") return run_depth(config, out);
  if (name == "sweep") return run_sweep(config, out);
  if (name == "plan-demo") return run_plan_demo(config, out);
  if (name == "report") return run_report(config, out);
  throw ConfigError("unknown subcommand '" + name + "'");
}

}  // namespace trajsens
