#include "trajsens/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "trajsens/parallel.hpp"
#include "trajsens/seed.hpp"

namespace trajsens {

namespace {

using Vec2 = Eigen::Vector2d;

constexpr double kStepMargin = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Box {
  double xmin, ymin, xmax, ymax;
  bool empty() const { return xmin > xmax || ymin > ymax; }
};

Box intersect(const Box& a, const Box& b) {
  return {std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin), std::min(a.xmax, b.xmax),
          std::min(a.ymax, b.ymax)};
}

Box step_box(const Vec2& c, double k) { return {c.x() - k, c.y() - k, c.x() + k, c.y() + k}; }

Vec2 clamp_to(const Box& b, const Vec2& p) {
  return {std::clamp(p.x(), b.xmin, b.xmax), std::clamp(p.y(), b.ymin, b.ymax)};
}

// Closest point to `goal` in box \ open disc(center, r). Returns false when
// the box lies inside the disc.
bool solve_box(const Box& box, const Vec2& center, double r, const Vec2& goal, Vec2& best) {
  if (box.empty()) return false;
  double best_d = kInf;
  auto consider = [&](Vec2 p) {
    p = clamp_to(box, p);
    // Circle points may round just inside r; r already carries the clearance margin.
    if ((p - center).norm() < r - 1e-9) return;
    const double d = (p - goal).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  };

  const Vec2 proj = clamp_to(box, goal);
  if ((proj - center).norm() >= r) {
    best = proj;
    return true;
  }

  // Stationary points on the circle and the four axis directions, which
  // cover goal == center.
  const Vec2 dir = goal - center;
  if (dir.norm() > 0.0) {
    consider(center + r * dir / dir.norm());
    consider(center - r * dir / dir.norm());
  }
  for (const Vec2& u : {Vec2(1, 0), Vec2(-1, 0), Vec2(0, 1), Vec2(0, -1)}) consider(center + r * u);

  const double xs[2] = {box.xmin, box.xmax};
  const double ys[2] = {box.ymin, box.ymax};
  for (double x : xs)
    for (double y : ys) consider({x, y});

  // Each edge: goal projection, and its crossings with the circle.
  for (double x : xs) {
    consider({x, goal.y()});
    const double h = r * r - (x - center.x()) * (x - center.x());
    if (h >= 0.0) {
      const double s = std::sqrt(h);
      consider({x, center.y() + s});
      consider({x, center.y() - s});
    }
  }
  for (double y : ys) {
    consider({goal.x(), y});
    const double h = r * r - (y - center.y()) * (y - center.y());
    if (h >= 0.0) {
      const double s = std::sqrt(h);
      consider({center.x() + s, y});
      consider({center.x() - s, y});
    }
  }
  return best_d < kInf;
}

class Solver {
 public:
  explicit Solver(const PlanProblem& p) : p_(p), r_(p.epsilon + kClearanceMargin), k_(p.kappa - kStepMargin) {
    for (const Rect& f : p.free_space) rects_.push_back({f.xmin, f.ymin, f.xmax, f.ymax});
  }

  // Best point for step t (1-based) toward `target` inside every given step box.
  bool best_point(int t, const Box& bound, const Vec2& target, Vec2& out) const {
    double best_d = kInf;
    for (const Box& rect : rects_) {
      Vec2 cand;
      if (!solve_box(intersect(rect, bound), p_.predictions[t - 1], r_, target, cand)) continue;
      const double d = (cand - target).squaredNorm();
      if (d < best_d) {
        best_d = d;
        out = cand;
      }
    }
    return best_d < kInf;
  }

  bool clear(int t, const Vec2& s) const {
    if ((s - p_.predictions[t - 1]).norm() < r_) return false;
    return std::any_of(rects_.begin(), rects_.end(), [&](const Box& b) {
      return s.x() >= b.xmin && s.x() <= b.xmax && s.y() >= b.ymin && s.y() <= b.ymax;
    });
  }

  // Forward pass: hold for `wait` steps, then move toward `target` with steps
  // capped at fraction `speed` of kappa. Returns the failing step, or 0.
  int greedy(const Vec2& target, int wait, double speed, std::vector<Vec2>& s) const {
    const int T = p_.horizon();
    s.assign(static_cast<std::size_t>(T) + 1, p_.start);
    for (int t = 1; t <= T; ++t) {
      const Vec2& prev = s[t - 1];
      if (t <= wait && clear(t, prev)) {
        s[t] = prev;
        continue;
      }
      if (best_point(t, step_box(prev, k_ * speed), target, s[t])) continue;
      if (speed < 1.0 && best_point(t, step_box(prev, k_), target, s[t])) continue;
      for (int u = t + 1; u <= T; ++u) s[u] = s[t - 1];
      return t;
    }
    return 0;
  }

  // Block coordinate descent: each s_t is re-solved exactly given its neighbours.
  int descend(std::vector<Vec2>& s, int max_sweeps) const {
    const int T = p_.horizon();
    int sweeps = 0;
    for (; sweeps < max_sweeps; ++sweeps) {
      bool moved = false;
      auto update = [&](int t) {
        Box bound = step_box(s[t - 1], k_);
        if (t < T) bound = intersect(bound, step_box(s[t + 1], k_));
        Vec2 cand;
        if (!best_point(t, bound, p_.goal, cand)) return;
        if ((cand - p_.goal).squaredNorm() < (s[t] - p_.goal).squaredNorm() - 1e-12) {
          s[t] = cand;
          moved = true;
        }
      };
      for (int t = T; t >= 1; --t) update(t);
      for (int t = 1; t <= T; ++t) update(t);
      if (!moved) break;
    }
    return sweeps;
  }

 private:
  const PlanProblem& p_;
  double r_;
  double k_;
  std::vector<Box> rects_;
};

struct Start {
  Vec2 target;
  int wait = 0;
  double speed = 1.0;
};

struct Attempt {
  std::vector<Vec2> states;
  double objective = kInf;
  int failed_step = 0;
  int sweeps = 0;
};

}  // namespace

void validate(const PlanProblem& problem) {
  if (!(problem.epsilon > 0.0) || !std::isfinite(problem.epsilon))
    throw ValidationError("plan: epsilon must be positive");
  if (!(problem.kappa > 0.0) || !std::isfinite(problem.kappa))
    throw ValidationError("plan: kappa must be positive");
  if (problem.free_space.empty()) throw ValidationError("plan: free space is empty");
  for (const Rect& r : problem.free_space) {
    if (!(r.xmin <= r.xmax && r.ymin <= r.ymax)) throw ValidationError("plan: inverted rectangle");
  }
  if (!problem.start.allFinite() || !problem.goal.allFinite())
    throw ValidationError("plan: start and goal must be finite");
  for (const Vec2& p : problem.predictions) {
    if (!p.allFinite()) throw ValidationError("plan: non-finite prediction");
  }
  if (std::none_of(problem.free_space.begin(), problem.free_space.end(),
                   [&](const Rect& r) { return r.contains(problem.start); })) {
    throw ValidationError("plan: start is outside free space");
  }
}

double plan_objective(const PlanProblem& problem, std::span<const Eigen::Vector2d> states) {
  double total = 0.0;
  for (const Vec2& s : states) total += (problem.goal - s).squaredNorm();
  return total;
}

ConstraintCheck check_plan(const PlanProblem& problem, std::span<const Eigen::Vector2d> states) {
  const int T = problem.horizon();
  if (static_cast<int>(states.size()) != T + 1) return {false, -1, "expected T + 1 states"};
  if (states[0] != problem.start) return {false, 0, "first state is not the start"};
  for (int t = 1; t <= T; ++t) {
    const Vec2& s = states[t];
    const Vec2 step = s - states[t - 1];
    if (std::abs(step.x()) > problem.kappa || std::abs(step.y()) > problem.kappa)
      return {false, t, "step exceeds kappa"};
    if (!((s - problem.predictions[t - 1]).norm() > problem.epsilon))
      return {false, t, "within epsilon of the prediction"};
    bool inside = false;
    for (const Rect& r : problem.free_space) inside = inside || r.contains(s);
    if (!inside) return {false, t, "outside free space"};
  }
  return {};
}

PlanResult plan(const PlanProblem& problem, const PlannerOptions& options) {
  validate(problem);
  const int T = problem.horizon();
  PlanResult result;
  if (T == 0) {
    result.states = {problem.start};
    result.objective = plan_objective(problem, result.states);
    result.feasible = true;
    return result;
  }
  const Solver solver(problem);

  // Targets: the goal itself plus lateral detours on both sides.
  std::vector<Vec2> targets{problem.goal};
  Vec2 axis = problem.goal - problem.start;
  axis = axis.norm() > 0.0 ? Vec2(axis / axis.norm()) : Vec2(1.0, 0.0);
  const Vec2 normal(-axis.y(), axis.x());
  for (double off : {0.5, 1.0, 2.0, 3.0}) {
    targets.push_back(problem.goal + off * problem.epsilon * normal);
    targets.push_back(problem.goal - off * problem.epsilon * normal);
  }
  for (double off : {1.0, 2.0}) {
    targets.push_back(problem.start + off * problem.epsilon * normal);
    targets.push_back(problem.start - off * problem.epsilon * normal);
    targets.push_back(problem.start - off * problem.epsilon * axis);
  }
  std::vector<Start> starts;
  for (const Vec2& target : targets)
    for (int wait = 0; wait <= T; ++wait)
      for (double speed : {1.0, 0.75, 0.5, 0.25}) starts.push_back({target, wait, speed});

  std::mt19937_64 rng(derive_seed(options.seed, "plan-restarts"));
  const double spread = problem.kappa * T;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> wait_dist(0, T);
  std::uniform_real_distribution<double> speed_dist(0.1, 1.0);
  for (int i = 0; i < options.random_restarts; ++i) {
    const Vec2 target = problem.start + spread * Vec2(unit(rng), unit(rng));
    starts.push_back({target, wait_dist(rng), speed_dist(rng)});
  }

  std::vector<Attempt> attempts(starts.size());
  parallel_for(starts.size(), options.workers, [&](std::size_t i) {
    Attempt& a = attempts[i];
    a.failed_step = solver.greedy(starts[i].target, starts[i].wait, starts[i].speed, a.states);
    if (a.failed_step != 0) return;
    a.sweeps = solver.descend(a.states, options.max_sweeps);
    a.objective = plan_objective(problem, a.states);
  });

  std::size_t best = attempts.size();
  int furthest = 0;
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    result.iterations += attempts[i].sweeps;
    if (attempts[i].failed_step != 0) {
      furthest = std::max(furthest, attempts[i].failed_step);
      continue;
    }
    if (best == attempts.size() || attempts[i].objective < attempts[best].objective) best = i;
  }
  result.restarts = static_cast<int>(attempts.size());
  if (best == attempts.size()) {
    // Report the plan that got furthest; its failing step is the bottleneck.
    std::size_t pick = 0;
    for (std::size_t i = 0; i < attempts.size(); ++i) {
      if (attempts[i].failed_step == furthest) {
        pick = i;
        break;
      }
    }
    result.states = attempts[pick].states;
    result.objective = plan_objective(problem, result.states);
    result.feasible = false;
    result.most_constrained_step = furthest;
    return result;
  }
  result.states = std::move(attempts[best].states);
  result.objective = attempts[best].objective;
  result.feasible = check_plan(problem, result.states).ok;
  return result;
}

}  // namespace trajsens
