#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "trajsens/scene.hpp"
#include "trajsens/seed.hpp"

namespace trajsens {

void validate(const ScenarioConfig& c) {
  if (!(c.dt > 0.0)) throw ValidationError("scenario: dt must be positive");
  if (c.history_steps < 1) throw ValidationError("scenario: history_steps must be >= 1");
  if (c.horizon < 1) throw ValidationError("scenario: horizon must be >= 1");
  if (c.lead_speed < 0.0 || c.speed_jitter < 0.0) {
    throw ValidationError("scenario: speeds must be nonnegative");
  }
  if (c.image_size < 1 || c.image_channels < 1) {
    throw ValidationError("scenario: image dimensions must be >= 1");
  }
  if (c.stop_probability < 0.0 || c.stop_probability > 1.0) {
    throw ValidationError("scenario: stop_probability must be in [0, 1]");
  }
  if (c.min_edge_weight > c.max_edge_weight) {
    throw ValidationError("scenario: min_edge_weight exceeds max_edge_weight");
  }
}

namespace {

// Point and heading at arc length s along a lane of constant curvature.
struct Lane {
  Eigen::Vector2d origin;
  double heading;
  double curvature;  // 1/m

  Eigen::Vector2d point(double s) const {
    if (std::abs(curvature) < 1e-12) {
      return origin + s * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    }
    const double h = heading + curvature * s;
    return origin + Eigen::Vector2d(std::sin(h) - std::sin(heading),
                                    std::cos(heading) - std::cos(h)) /
                        curvature;
  }
  double heading_at(double s) const { return heading + curvature * s; }
};

struct Noise {
  std::mt19937_64& rng;
  double operator()(double sigma) {
    if (sigma <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng);
  }
};

// State on the lane at arc length s while moving at `speed`.
AgentState lane_state(const Lane& lane, double s, double speed) {
  const Eigen::Vector2d p = lane.point(s);
  const double h = lane.heading_at(s);
  const double omega = lane.curvature * speed;
  AgentState st;
  st << p.x(), p.y(), speed * std::cos(h), speed * std::sin(h), -speed * omega * std::sin(h),
      speed * omega * std::cos(h), h, omega;
  return st;
}

}  // namespace

SceneInput generate_scene(std::uint64_t seed, const ScenarioConfig& c) {
  validate(c);
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  Noise noise{rng};

  const double heading = c.random_heading ? uniform(-std::numbers::pi, std::numbers::pi)
                                          : c.lane_heading;
  const double speed = std::max(0.0, c.lead_speed + uniform(-c.speed_jitter, c.speed_jitter));
  const double follower_speed = speed * uniform(0.97, 1.03);
  double turn_rate = 0.0;
  if (c.max_turn_rate > 0.0 && uniform(0.0, 1.0) < 0.5) {
    turn_rate = uniform(-c.max_turn_rate, c.max_turn_rate);
  }
  const bool stop = uniform(0.0, 1.0) < c.stop_probability;
  const Eigen::Vector2d follower_now(uniform(-c.origin_spread, c.origin_spread),
                                     uniform(-c.origin_spread, c.origin_spread));

  // Arc length 0 is the lead's current position.
  Lane lane{Eigen::Vector2d::Zero(), heading, speed > 0.1 ? turn_rate / speed : 0.0};
  lane.origin = follower_now - (lane.point(-c.gap) - lane.point(0.0));

  const int n_hist = c.history_steps + 1;
  auto history = [&](double speed_i, double s_now) {
    Trajectory traj;
    traj.dt = c.dt;
    traj.states.resize(n_hist, kStateDim);
    for (int k = 0; k < n_hist; ++k) {
      const double s = s_now + speed_i * (k - c.history_steps) * c.dt;
      AgentState st = lane_state(lane, s, speed_i);
      st[kX] += noise(c.position_noise);
      st[kY] += noise(c.position_noise);
      st[kVx] += noise(c.velocity_noise);
      st[kVy] += noise(c.velocity_noise);
      st[kAx] += noise(c.velocity_noise);
      st[kAy] += noise(c.velocity_noise);
      st[kHeading] = normalize_heading(st[kHeading] + noise(0.01));
      st[kAngularVelocity] += noise(0.01);
      traj.states.row(k) = st.transpose();
    }
    return traj;
  };

  SceneInput scene;
  scene.agents.push_back({"lead", history(speed, 0.0)});
  scene.agents.push_back({"follower", history(follower_speed, -c.gap)});
  scene.target_agent = "lead";

  scene.ground_truth.resize(c.horizon, 2);
  for (int j = 1; j <= c.horizon; ++j) {
    const Eigen::Vector2d p = stop ? lane.point(0.0) : lane.point(speed * j * c.dt);
    scene.ground_truth(j - 1, 0) = p.x() + noise(c.future_noise);
    scene.ground_truth(j - 1, 1) = p.y() + noise(c.future_noise);
  }

  // Agent-centric raster drawn on a grid of quarter-size blocks, so each
  // block lines up with one encoder patch at the default sizes: lane band
  // (role 0) on the middle two block rows, stop bar (role 1) filling the lane
  // block just ahead, lane-edge markings (role 2) on the rows bounding the band.
  // Extra channels repeat the roles.
  ImageMap& img = scene.image;
  img.width = c.image_size;
  img.height = c.image_size;
  img.channels = c.image_channels;
  img.pixels.resize(static_cast<Eigen::Index>(img.width) * img.height * img.channels);
  const int block = std::max(1, c.image_size / 4);
  const int lane_lo = block;
  const int lane_hi = c.image_size - block;  // exclusive
  for (int r = 0; r < img.height; ++r) {
    const bool in_lane = r >= lane_lo && r < lane_hi;
    const bool edge = r == lane_lo - 1 || r == lane_hi;
    for (int col = 0; col < img.width; ++col) {
      const bool at_bar = col >= 2 * block && col < 3 * block;
      for (int ch = 0; ch < img.channels; ++ch) {
        double v = 0.0;
        switch (ch % 3) {
          case 0: v = in_lane ? 0.8 : 0.1; break;
          case 1: v = (stop && in_lane && at_bar) ? 1.0 : 0.0; break;
          case 2: v = edge ? 1.0 : 0.0; break;
        }
        img.pixels[img.index(r, col, ch)] = v + uniform(0.0, 0.05);
      }
    }
  }

  SceneGraph& g = scene.graph;
  g.nodes = {"lead", "follower"};
  g.edges = {{1, 0}, {0, 1}};
  g.weights.resize(2);
  g.weights << uniform(c.min_edge_weight, c.max_edge_weight),
      uniform(c.min_edge_weight, c.max_edge_weight);
  g.node_presence = Eigen::VectorXd::Ones(2);
  return scene;
}

std::vector<SceneInput> generate_dataset(std::uint64_t seed, int count, const ScenarioConfig& c) {
  std::vector<SceneInput> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    out.push_back(generate_scene(derive_seed(seed, "scene", static_cast<std::uint64_t>(i)), c));
  }
  return out;
}

}  // namespace trajsens
