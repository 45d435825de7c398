#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "trajsens/scene.hpp"

namespace trajsens {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormat = "trajsens-scene";
constexpr int kVersion = 1;

const Json& require(const Json& obj, const char* field, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw ValidationError((where.empty() ? "" : where + ".") + field + ": missing required field");
  }
  return *it;
}

double number(const Json& v, const std::string& field) {
  if (!v.is_number()) throw ParseError(field + ": expected a number");
  return v.get<double>();
}

int integer(const Json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ParseError(field + ": expected an integer");
  return v.get<int>();
}

std::string text(const Json& v, const std::string& field) {
  if (!v.is_string()) throw ParseError(field + ": expected a string");
  return v.get<std::string>();
}

const Json& array(const Json& v, const std::string& field) {
  if (!v.is_array()) throw ParseError(field + ": expected an array");
  return v;
}

Json row_array(const auto& row) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < row.size(); ++i) a.push_back(row[i]);
  return a;
}

}  // namespace

std::string serialize_scene(const SceneInput& scene) {
  validate(scene);
  Json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dt"] = scene.dt();
  Json agents = Json::object();
  for (const auto& a : scene.agents) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < a.history.states.rows(); ++r) {
      rows.push_back(row_array(a.history.states.row(r)));
    }
    agents[a.id] = std::move(rows);
  }
  j["agents"] = std::move(agents);
  j["image"] = {{"w", scene.image.width},
                {"h", scene.image.height},
                {"l", scene.image.channels},
                {"pixels", row_array(scene.image.pixels)}};
  Json edges = Json::array();
  for (std::size_t e = 0; e < scene.graph.edges.size(); ++e) {
    const auto& edge = scene.graph.edges[e];
    edges.push_back(Json::array({scene.graph.nodes[static_cast<std::size_t>(edge.source)],
                                 scene.graph.nodes[static_cast<std::size_t>(edge.target)],
                                 scene.graph.weights[static_cast<Eigen::Index>(e)]}));
  }
  j["graph"] = {{"nodes", scene.graph.nodes},
                {"edges", std::move(edges)},
                {"node_presence", row_array(scene.graph.node_presence)}};
  j["target_agent"] = scene.target_agent;
  Json gt = Json::array();
  for (Eigen::Index r = 0; r < scene.ground_truth.rows(); ++r) {
    gt.push_back(row_array(scene.ground_truth.row(r)));
  }
  j["ground_truth"] = std::move(gt);
  return j.dump(1) + "\n";
}

SceneInput parse_scene(const std::string& input) {
  Json j;
  try {
    j = Json::parse(input);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("scene: expected an object at top level");
  if (auto f = j.find("format"); f != j.end() && text(*f, "format") != kFormat) {
    throw ParseError("format: unknown scene format '" + f->get<std::string>() + "'");
  }
  if (auto v = j.find("version"); v != j.end() && integer(*v, "version") != kVersion) {
    throw ParseError("version: unsupported scene version");
  }

  SceneInput scene;
  const double dt = number(require(j, "dt", ""), "dt");
  const Json& agents = require(j, "agents", "");
  if (!agents.is_object()) throw ParseError("agents: expected an object of id -> states");
  for (auto it = agents.begin(); it != agents.end(); ++it) {
    const std::string field = "agents." + it.key();
    const Json& rows = array(it.value(), field);
    Trajectory traj;
    traj.dt = dt;
    traj.states.resize(static_cast<Eigen::Index>(rows.size()), kStateDim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string rf = field + "[" + std::to_string(r) + "]";
      const Json& row = array(rows[r], rf);
      if (row.size() != kStateDim) throw ValidationError(rf + ": expected 8 state values");
      for (int d = 0; d < kStateDim; ++d) {
        traj.states(static_cast<Eigen::Index>(r), d) = number(row[static_cast<std::size_t>(d)], rf);
      }
    }
    scene.agents.push_back({it.key(), std::move(traj)});
  }

  const Json& img = require(j, "image", "");
  scene.image.width = integer(require(img, "w", "image"), "image.w");
  scene.image.height = integer(require(img, "h", "image"), "image.h");
  scene.image.channels = integer(require(img, "l", "image"), "image.l");
  const Json& pixels = array(require(img, "pixels", "image"), "image.pixels");
  scene.image.pixels.resize(static_cast<Eigen::Index>(pixels.size()));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    scene.image.pixels[static_cast<Eigen::Index>(i)] = number(pixels[i], "image.pixels");
  }

  const Json& graph = require(j, "graph", "");
  for (const auto& n : array(require(graph, "nodes", "graph"), "graph.nodes")) {
    scene.graph.nodes.push_back(text(n, "graph.nodes"));
  }
  const Json& edges = array(require(graph, "edges", "graph"), "graph.edges");
  scene.graph.weights.resize(static_cast<Eigen::Index>(edges.size()));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::string ef = "graph.edges[" + std::to_string(e) + "]";
    const Json& triple = array(edges[e], ef);
    if (triple.size() != 3) throw ParseError(ef + ": expected [src, dst, weight]");
    const auto src = scene.graph.find(text(triple[0], ef));
    const auto dst = scene.graph.find(text(triple[1], ef));
    if (!src || !dst) throw ValidationError(ef + ": endpoint is not a listed node");
    scene.graph.edges.push_back({*src, *dst});
    scene.graph.weights[static_cast<Eigen::Index>(e)] = number(triple[2], ef);
  }
  if (auto p = graph.find("node_presence"); p != graph.end()) {
    const Json& pres = array(*p, "graph.node_presence");
    scene.graph.node_presence.resize(static_cast<Eigen::Index>(pres.size()));
    for (std::size_t i = 0; i < pres.size(); ++i) {
      scene.graph.node_presence[static_cast<Eigen::Index>(i)] =
          number(pres[i], "graph.node_presence");
    }
  } else {
    scene.graph.node_presence =
        Eigen::VectorXd::Ones(static_cast<Eigen::Index>(scene.graph.nodes.size()));
  }

  scene.target_agent = text(require(j, "target_agent", ""), "target_agent");
  const Json& gt = array(require(j, "ground_truth", ""), "ground_truth");
  scene.ground_truth.resize(static_cast<Eigen::Index>(gt.size()), 2);
  for (std::size_t r = 0; r < gt.size(); ++r) {
    const std::string rf = "ground_truth[" + std::to_string(r) + "]";
    const Json& xy = array(gt[r], rf);
    if (xy.size() != 2) throw ValidationError(rf + ": expected [x, y]");
    scene.ground_truth(static_cast<Eigen::Index>(r), 0) = number(xy[0], rf);
    scene.ground_truth(static_cast<Eigen::Index>(r), 1) = number(xy[1], rf);
  }

  validate(scene);
  return scene;
}

SceneInput load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

void save_scene(const SceneInput& scene, const std::filesystem::path& path) {
  const std::string body = serialize_scene(scene);
  std::ofstream out(path);
  if (!out) throw Error("cannot write scene file " + path.string());
  out << body;
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<SceneInput> load_scene_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<SceneInput> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) scenes.push_back(load_scene(f));
  return scenes;
}

}  // namespace trajsens
