#include "trajsens/core.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace trajsens {

namespace {

constexpr std::array<std::string_view, kStateDim> kDimNames = {"x",  "y",  "vx",      "vy",
                                                              "ax", "ay", "heading", "omega"};

[[noreturn]] void fail(const std::string& what) { throw ValidationError(what); }

bool all_finite(const auto& m) { return m.allFinite(); }

}  // namespace

std::string_view state_dim_name(int dim) {
  if (dim < 0 || dim >= kStateDim) return "?";
  return kDimNames[static_cast<std::size_t>(dim)];
}

std::optional<int> parse_state_dim(std::string_view name) {
  for (int d = 0; d < kStateDim; ++d) {
    if (kDimNames[static_cast<std::size_t>(d)] == name) return d;
  }
  if (name == "angular_velocity") return kAngularVelocity;
  return std::nullopt;
}

double normalize_heading(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

std::optional<int> SceneGraph::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] == id) return static_cast<int>(i);
  }
  return std::nullopt;
}

int SceneInput::agent_index(std::string_view id) const {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].id == id) return static_cast<int>(i);
  }
  throw ValidationError("unknown agent '" + std::string(id) + "'");
}

void validate(const SceneInput& scene) {
  if (scene.agents.empty()) fail("agents: at least one agent required");
  std::set<std::string> ids;
  const auto& first = scene.agents.front().history;
  for (const auto& a : scene.agents) {
    if (!ids.insert(a.id).second) fail("agents: duplicate id '" + a.id + "'");
    const auto& h = a.history;
    if (h.length() < 1) fail("agents." + a.id + ": empty history");
    if (!(h.dt > 0.0) || !std::isfinite(h.dt)) fail("dt: must be positive");
    if (h.dt != first.dt) fail("agents." + a.id + ": dt differs between agents");
    if (h.length() != first.length()) fail("agents." + a.id + ": history length differs");
    if (!all_finite(h.states)) fail("agents." + a.id + ": non-finite state value");
  }
  if (!ids.contains(scene.target_agent)) {
    fail("target_agent: '" + scene.target_agent + "' is not among agents");
  }

  const auto& img = scene.image;
  if (img.width < 1 || img.height < 1 || img.channels < 1) fail("image: w, h, l must be >= 1");
  const Eigen::Index expected = static_cast<Eigen::Index>(img.width) * img.height * img.channels;
  if (img.pixels.size() != expected) {
    std::ostringstream msg;
    msg << "image: pixel count " << img.pixels.size() << " != w*h*l = " << expected;
    fail(msg.str());
  }
  if (!all_finite(img.pixels)) fail("image: non-finite pixel value");

  const auto& g = scene.graph;
  std::set<std::string> node_ids;
  for (const auto& n : g.nodes) {
    if (!node_ids.insert(n).second) fail("graph: duplicate node '" + n + "'");
    if (!ids.contains(n)) fail("graph: node '" + n + "' has no agent history");
  }
  if (!node_ids.contains(scene.target_agent)) fail("graph: target agent is not a node");
  const int n_nodes = static_cast<int>(g.nodes.size());
  for (const auto& e : g.edges) {
    if (e.source < 0 || e.source >= n_nodes || e.target < 0 || e.target >= n_nodes) {
      fail("graph: edge endpoint is not a listed node");
    }
  }
  if (g.weights.size() != static_cast<Eigen::Index>(g.edges.size())) {
    fail("graph: one weight per edge required");
  }
  if (!all_finite(g.weights)) fail("graph: non-finite edge weight");
  if (g.node_presence.size() != n_nodes) fail("graph: one presence value per node required");
  if (!all_finite(g.node_presence)) fail("graph: non-finite node presence");

  if (scene.ground_truth.rows() < 1) fail("ground_truth: at least one position required");
  if (!all_finite(scene.ground_truth)) fail("ground_truth: non-finite position");
}

std::string feature_label(const FeatureId& f, const SceneInput* scene) {
  switch (f.kind) {
    case FeatureId::Kind::StateHistoryAll: return "state_history";
    case FeatureId::Kind::Image: return "image";
    case FeatureId::Kind::GraphWeights: return "graph_weights";
    case FeatureId::Kind::GraphNodes: {
      if (f.node < 0) return "graph_nodes";
      if (scene != nullptr && f.node < static_cast<int>(scene->graph.nodes.size())) {
        return "graph_node[" + scene->graph.nodes[static_cast<std::size_t>(f.node)] + "]";
      }
      return "graph_node[" + std::to_string(f.node) + "]";
    }
    case FeatureId::Kind::StateCell: {
      std::string agent = std::to_string(f.agent);
      if (scene != nullptr && f.agent >= 0 && f.agent < static_cast<int>(scene->agents.size())) {
        agent = scene->agents[static_cast<std::size_t>(f.agent)].id;
      }
      return "state[" + agent + "]." + std::string(state_dim_name(f.dim)) + "@" +
             std::to_string(f.step);
    }
  }
  return "?";
}

SceneTensors tensors_of(const SceneInput& scene) {
  SceneTensors t;
  t.histories.reserve(scene.agents.size());
  for (const auto& a : scene.agents) t.histories.push_back(a.history.states);
  t.image = scene.image.pixels;
  t.weights = scene.graph.weights;
  t.presence = scene.graph.node_presence;
  return t;
}

void check_feature(const SceneInput& scene, const FeatureId& f) {
  switch (f.kind) {
    case FeatureId::Kind::StateCell: {
      if (f.agent < 0 || f.agent >= static_cast<int>(scene.agents.size())) {
        fail("feature: agent index out of range");
      }
      if (f.dim < 0 || f.dim >= kStateDim) fail("feature: state dim must be in [0, 7]");
      if (f.step < 0 || f.step >= scene.history_length()) {
        std::ostringstream msg;
        msg << "feature: step " << f.step << " outside history [0, " << scene.history_length() - 1
            << "]";
        fail(msg.str());
      }
      return;
    }
    case FeatureId::Kind::GraphNodes:
      if (f.node >= static_cast<int>(scene.graph.nodes.size())) {
        fail("feature: graph node index out of range");
      }
      return;
    default: return;
  }
}

namespace {

// Visits the addressed scalars in canonical order: fn(quantity, scalar&).
template <typename Histories, typename Vec, typename Fn>
void visit(Histories& histories, Vec& image, Vec& weights, Vec& presence, int target,
           const FeatureId& f, Fn&& fn) {
  switch (f.kind) {
    case FeatureId::Kind::StateHistoryAll: {
      auto& h = histories[static_cast<std::size_t>(target)];
      for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (int d = 0; d < kStateDim; ++d) fn(static_cast<Quantity>(d), h(r, d));
      }
      return;
    }
    case FeatureId::Kind::StateCell:
      fn(static_cast<Quantity>(f.dim), histories[static_cast<std::size_t>(f.agent)](f.step, f.dim));
      return;
    case FeatureId::Kind::Image:
      for (Eigen::Index i = 0; i < image.size(); ++i) fn(Quantity::Image, image[i]);
      return;
    case FeatureId::Kind::GraphWeights:
      for (Eigen::Index i = 0; i < weights.size(); ++i) fn(Quantity::EdgeWeight, weights[i]);
      return;
    case FeatureId::Kind::GraphNodes:
      if (f.node >= 0) {
        fn(Quantity::NodePresence, presence[f.node]);
      } else {
        for (Eigen::Index i = 0; i < presence.size(); ++i) fn(Quantity::NodePresence, presence[i]);
      }
      return;
  }
}

struct HistoryRefs {
  std::vector<StateMatrix*> ptrs;
  StateMatrix& operator[](std::size_t i) { return *ptrs[i]; }
};

struct ConstHistoryRefs {
  std::vector<const StateMatrix*> ptrs;
  const StateMatrix& operator[](std::size_t i) const { return *ptrs[i]; }
};

}  // namespace

Eigen::Index feature_size(const SceneInput& scene, const FeatureId& f) {
  check_feature(scene, f);
  switch (f.kind) {
    case FeatureId::Kind::StateHistoryAll:
      return static_cast<Eigen::Index>(scene.history_length()) * kStateDim;
    case FeatureId::Kind::StateCell: return 1;
    case FeatureId::Kind::Image: return scene.image.pixels.size();
    case FeatureId::Kind::GraphWeights: return scene.graph.weights.size();
    case FeatureId::Kind::GraphNodes: return f.node >= 0 ? 1 : scene.graph.node_presence.size();
  }
  return 0;
}

std::vector<Quantity> feature_quantities(const SceneInput& scene, const FeatureId& f) {
  check_feature(scene, f);
  std::vector<Quantity> out;
  ConstHistoryRefs h;
  for (const auto& a : scene.agents) h.ptrs.push_back(&a.history.states);
  visit(h, scene.image.pixels, scene.graph.weights, scene.graph.node_presence,
        scene.target_index(), f, [&](Quantity q, const double&) { out.push_back(q); });
  return out;
}

Eigen::VectorXd extract(const SceneInput& scene, const FeatureId& f) {
  return extract(tensors_of(scene), scene, f);
}

Eigen::VectorXd extract(const SceneTensors& t, const SceneInput& scene, const FeatureId& f) {
  check_feature(scene, f);
  std::vector<double> values;
  ConstHistoryRefs h;
  for (const auto& m : t.histories) h.ptrs.push_back(&m);
  visit(h, t.image, t.weights, t.presence, scene.target_index(), f,
        [&](Quantity, const double& v) { values.push_back(v); });
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void add_to(SceneInput& scene, const FeatureId& f, const Eigen::VectorXd& delta) {
  const Eigen::Index n = feature_size(scene, f);
  if (delta.size() != n) {
    std::ostringstream msg;
    msg << "perturbation shape " << delta.size() << " does not match feature "
        << feature_label(f, &scene) << " of size " << n;
    throw ValidationError(msg.str());
  }
  HistoryRefs h;
  for (auto& a : scene.agents) h.ptrs.push_back(&a.history.states);
  Eigen::Index i = 0;
  visit(h, scene.image.pixels, scene.graph.weights, scene.graph.node_presence,
        scene.target_index(), f, [&](Quantity, double& v) { v += delta[i++]; });
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void text(const std::string& s) {
    bytes(s.data(), s.size());
    bytes("\0", 1);
  }
  template <typename Derived>
  void values(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        bytes(&v, sizeof v);
      }
    }
  }
};

}  // namespace

std::uint64_t scene_fingerprint(const SceneInput& scene) {
  Fnv f;
  for (const auto& a : scene.agents) {
    f.text(a.id);
    f.bytes(&a.history.dt, sizeof(double));
    f.values(a.history.states);
  }
  const int dims[3] = {scene.image.width, scene.image.height, scene.image.channels};
  f.bytes(dims, sizeof dims);
  f.values(scene.image.pixels);
  for (const auto& n : scene.graph.nodes) f.text(n);
  for (const auto& e : scene.graph.edges) {
    const int ends[2] = {e.source, e.target};
    f.bytes(ends, sizeof ends);
  }
  f.values(scene.graph.weights);
  f.values(scene.graph.node_presence);
  f.text(scene.target_agent);
  f.values(scene.ground_truth);
  return f.h;
}

}  // namespace trajsens
