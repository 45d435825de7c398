#pragma once

// Goal-seeking planner around one predicted obstacle:
//
//   min  sum_{t=0..T} |goal - s_t|^2
//   s.t. s_0 = start
//        |s_t - s_{t-1}|_inf <= kappa          t = 1..T
//        |s_t - prediction_t|_2 > epsilon       t = 1..T
//        s_t in free space (union of closed rectangles)
//
// The strict separation is solved as >= epsilon + kClearanceMargin.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trajsens/attribution.hpp"

namespace trajsens {

inline constexpr double kClearanceMargin = 1e-6;

struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
  }
};

struct PlanProblem {
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> predictions;  // obstacle at t = 1..T
  double epsilon = 15.0;
  double kappa = 16.5;
  std::vector<Rect> free_space;

  int horizon() const { return static_cast<int>(predictions.size()); }
};

/// Throws ValidationError: epsilon/kappa <= 0, empty free space, start outside it.
void validate(const PlanProblem& problem);

struct PlanResult {
  std::vector<Eigen::Vector2d> states;  // s_0 = start, then t = 1..T
  double objective = 0.0;
  bool feasible = false;
  int most_constrained_step = -1;  // infeasible only: first step with no admissible point
  int iterations = 0;
  int restarts = 0;
};

double plan_objective(const PlanProblem& problem, std::span<const Eigen::Vector2d> states);

struct ConstraintCheck {
  bool ok = true;
  int step = -1;
  std::string violation;
};

/// Independent check of the three constraint families, exactly as stated
/// (strict separation, closed step bound, closed free-space rectangles).
ConstraintCheck check_plan(const PlanProblem& problem, std::span<const Eigen::Vector2d> states);

struct PlannerOptions {
  int random_restarts = 8;
  int max_sweeps = 200;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Multi-start projected local search: greedy forward passes from several
/// starts (waiting k steps, lateral detours, jitter), then block coordinate
/// descent where each step is re-solved exactly against its neighbours.
PlanResult plan(const PlanProblem& problem, const PlannerOptions& options = {});

/// Largest number of grid cells (per layer times layers) the oracle accepts.
inline constexpr double kBruteForceCellLimit = 5e7;

/// Exact optimum over a start-aligned grid of spacing `grid_step`: dynamic
/// programming over all kappa-bounded moves. Throws ValidationError when the
/// search space exceeds kBruteForceCellLimit.
PlanResult brute_force_plan(const PlanProblem& problem, double grid_step);

/// Objective slack of one grid cell per step around the oracle's plan:
/// sum_t (d_t + sqrt(2) g)^2 - d_t^2 with d_t the oracle's goal distance.
double grid_tolerance(const PlanProblem& problem, const PlanResult& oracle, double grid_step);

// --- attack demonstration ----------------------------------------------------

/// Problem layout relative to the ego agent's current position.
struct PlanTemplate {
  std::string ego_agent = "follower";
  Eigen::Vector2d goal_offset{100.0, 0.0};
  std::vector<Rect> free_space{{-50.0, -0.25, 400.0, 0.25}};  // lane-centre corridor
  double epsilon = 15.0;
  double kappa = 16.5;
};

PlanProblem make_problem(const SceneInput& scene, const Positions& obstacle,
                         const PlanTemplate& tmpl);

struct DemoResult {
  PredictionOutput baseline_prediction;
  PredictionOutput attacked_prediction;
  PlanResult baseline;
  PlanResult attacked;
  std::string table;  // rows baseline/attacked x and y, columns t = 0..T
};

/// predict -> plan on the scene, and again after applying every attack spec
/// (all built against the unperturbed scene).
DemoResult demo_attack(const SceneInput& scene, const PredictorParams& params,
                       std::span<const PerturbSpec> attack, const PlanTemplate& tmpl,
                       const Ranges& ranges, ModeSelection selection,
                       std::uint64_t gradient_seed, const PlannerOptions& options = {});

std::string plan_table(const PlanResult& baseline, const PlanResult& attacked);

}  // namespace trajsens
