#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajsens/errors.hpp"

namespace trajsens {

inline constexpr int kStateDim = 8;

/// Column layout of an agent state row.
enum StateIndex : int { kX = 0, kY, kVx, kVy, kAx, kAy, kHeading, kAngularVelocity };

std::string_view state_dim_name(int dim);
std::optional<int> parse_state_dim(std::string_view name);

using AgentState = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, kStateDim, Eigen::RowMajor>;
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Wraps an angle into (-pi, pi].
double normalize_heading(double angle);

/// Uniformly sampled state sequence, oldest row first.
struct Trajectory {
  StateMatrix states;
  double dt = 0.5;

  Eigen::Index length() const { return states.rows(); }
  AgentState current() const { return states.row(states.rows() - 1).transpose(); }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.dt == b.dt && a.states.rows() == b.states.rows() && a.states == b.states;
  }
};

/// W x H x L raster; pixel (row, col, ch) lives at ((row * width) + col) * channels + ch.
struct ImageMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  Eigen::VectorXd pixels;

  Eigen::Index index(int row, int col, int ch) const {
    return (static_cast<Eigen::Index>(row) * width + col) * channels + ch;
  }
  double at(int row, int col, int ch) const { return pixels[index(row, col, ch)]; }

  friend bool operator==(const ImageMap& a, const ImageMap& b) {
    return a.width == b.width && a.height == b.height && a.channels == b.channels &&
           a.pixels.size() == b.pixels.size() && a.pixels == b.pixels;
  }
};

/// Directed edge between node indices of a SceneGraph.
struct Edge {
  int source = 0;
  int target = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Interaction graph. Edge weight w_e is the influence of source on target;
/// node_presence scales every outgoing contribution of a node (1 = present).
struct SceneGraph {
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  Eigen::VectorXd weights;
  Eigen::VectorXd node_presence;

  std::optional<int> find(std::string_view id) const;

  friend bool operator==(const SceneGraph& a, const SceneGraph& b) {
    return a.nodes == b.nodes && a.edges == b.edges && a.weights.size() == b.weights.size() &&
           a.weights == b.weights && a.node_presence.size() == b.node_presence.size() &&
           a.node_presence == b.node_presence;
  }
};

struct AgentHistory {
  std::string id;
  Trajectory history;
  friend bool operator==(const AgentHistory&, const AgentHistory&) = default;
};

/// Everything the predictor consumes for one prediction, plus the target's
/// future (x, y) positions used for scoring and for the loss.
struct SceneInput {
  std::vector<AgentHistory> agents;
  ImageMap image;
  SceneGraph graph;
  std::string target_agent;
  Positions ground_truth;

  double dt() const { return agents.front().history.dt; }
  int history_length() const { return static_cast<int>(agents.front().history.length()); }
  int agent_index(std::string_view id) const;
  int target_index() const { return agent_index(target_agent); }
  const Trajectory& target_history() const { return agents[target_index()].history; }

  friend bool operator==(const SceneInput& a, const SceneInput& b) {
    return a.agents == b.agents && a.image == b.image && a.graph == b.graph &&
           a.target_agent == b.target_agent && a.ground_truth.rows() == b.ground_truth.rows() &&
           a.ground_truth == b.ground_truth;
  }
};

/// Throws ValidationError describing the first violated rule.
void validate(const SceneInput& scene);

/// K weighted trajectory hypotheses over (x, y).
struct PredictionOutput {
  std::vector<Positions> modes;
  Eigen::VectorXd mode_weights;
  int selected_mode = 0;

  const Positions& selected() const { return modes[static_cast<std::size_t>(selected_mode)]; }
};

/// Addresses a perturbable slice of a SceneInput.
struct FeatureId {
  enum class Kind { StateHistoryAll, StateCell, Image, GraphNodes, GraphWeights };

  Kind kind = Kind::Image;
  int agent = -1;  // StateCell
  int dim = -1;    // StateCell
  int step = -1;   // StateCell
  int node = -1;   // GraphNodes; -1 addresses every node

  static FeatureId state_history_all() { return {Kind::StateHistoryAll}; }
  static FeatureId state_cell(int agent, int dim, int step) {
    return {Kind::StateCell, agent, dim, step};
  }
  static FeatureId image() { return {Kind::Image}; }
  static FeatureId graph_nodes(int node = -1) { return {Kind::GraphNodes, -1, -1, -1, node}; }
  static FeatureId graph_weights() { return {Kind::GraphWeights}; }

  friend bool operator==(const FeatureId&, const FeatureId&) = default;
};

std::string feature_label(const FeatureId& feature, const SceneInput* scene = nullptr);

/// Per-scalar quantity class, used to look up normalization ranges.
enum class Quantity : int {
  X = 0, Y, Vx, Vy, Ax, Ay, Heading, AngularVelocity, Image, EdgeWeight, NodePresence
};

/// Numeric payload of a scene, laid out like SceneInput. Input gradients use
/// this type so they can be sliced with the same FeatureIds.
struct SceneTensors {
  std::vector<StateMatrix> histories;
  Eigen::VectorXd image;
  Eigen::VectorXd weights;
  Eigen::VectorXd presence;
};

SceneTensors tensors_of(const SceneInput& scene);

/// Throws ValidationError if the feature does not address valid scalars of the scene.
void check_feature(const SceneInput& scene, const FeatureId& feature);
Eigen::Index feature_size(const SceneInput& scene, const FeatureId& feature);
std::vector<Quantity> feature_quantities(const SceneInput& scene, const FeatureId& feature);
Eigen::VectorXd extract(const SceneInput& scene, const FeatureId& feature);
/// Slices tensors that share the scene's layout (e.g. an input gradient).
Eigen::VectorXd extract(const SceneTensors& tensors, const SceneInput& scene,
                        const FeatureId& feature);
/// In-place I += delta on the addressed scalars.
void add_to(SceneInput& scene, const FeatureId& feature, const Eigen::VectorXd& delta);

/// 64-bit FNV-1a over every id and numeric bit pattern of the scene. Per-scene
/// random streams are keyed by it, so results do not depend on dataset order.
std::uint64_t scene_fingerprint(const SceneInput& scene);

}  // namespace trajsens
