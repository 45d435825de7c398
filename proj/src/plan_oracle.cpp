#include <algorithm>
#include <cmath>
#include <limits>

#include "trajsens/planner.hpp"

namespace trajsens {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Min over a window of +-m cells along one axis, with the winning index.
// Ties keep the lowest index.
void window_min(const std::vector<double>& in, const std::vector<long>& in_arg, long n,
                long stride, long m, std::vector<double>& out, std::vector<long>& out_arg,
                long base) {
  for (long i = 0; i < n; ++i) {
    double best = kInf;
    long arg = -1;
    for (long j = std::max(0L, i - m); j <= std::min(n - 1, i + m); ++j) {
      const long idx = base + j * stride;
      if (in[idx] < best) {
        best = in[idx];
        arg = in_arg.empty() ? idx : in_arg[idx];
      }
    }
    out[base + i * stride] = best;
    out_arg[base + i * stride] = arg;
  }
}

}  // namespace

PlanResult brute_force_plan(const PlanProblem& problem, double grid_step) {
  validate(problem);
  if (!(grid_step > 0.0) || !std::isfinite(grid_step))
    throw ValidationError("brute_force_plan: grid_step must be positive");
  const int T = problem.horizon();
  const long m = static_cast<long>(std::floor(problem.kappa / grid_step));

  // Start-aligned lattice covering every cell reachable in T moves that can
  // also lie in free space.
  double xmin = kInf, ymin = kInf, xmax = -kInf, ymax = -kInf;
  for (const Rect& r : problem.free_space) {
    xmin = std::min(xmin, r.xmin);
    ymin = std::min(ymin, r.ymin);
    xmax = std::max(xmax, r.xmax);
    ymax = std::max(ymax, r.ymax);
  }
  const long reach = m * T;
  const long ix0 = std::max(-reach, static_cast<long>(std::floor((xmin - problem.start.x()) / grid_step)));
  const long ix1 = std::min(reach, static_cast<long>(std::ceil((xmax - problem.start.x()) / grid_step)));
  const long iy0 = std::max(-reach, static_cast<long>(std::floor((ymin - problem.start.y()) / grid_step)));
  const long iy1 = std::min(reach, static_cast<long>(std::ceil((ymax - problem.start.y()) / grid_step)));
  const long nx = ix1 - ix0 + 1;
  const long ny = iy1 - iy0 + 1;
  if (static_cast<double>(nx) * static_cast<double>(ny) * std::max(T, 1) > kBruteForceCellLimit)
    throw ValidationError("brute_force_plan: search space exceeds " +
                          std::to_string(static_cast<long long>(kBruteForceCellLimit)) + " cells");

  const long cells = nx * ny;
  auto point = [&](long c) {
    const long ix = c % nx + ix0;
    const long iy = c / nx + iy0;
    return Eigen::Vector2d(problem.start.x() + static_cast<double>(ix) * grid_step,
                           problem.start.y() + static_cast<double>(iy) * grid_step);
  };
  const long start_cell = (0 - iy0) * nx + (0 - ix0);

  std::vector<double> value(static_cast<std::size_t>(cells), kInf);
  value[start_cell] = (problem.goal - problem.start).squaredNorm();
  std::vector<std::vector<long>> parent(static_cast<std::size_t>(T));
  std::vector<double> row_min(static_cast<std::size_t>(cells));
  std::vector<long> row_arg(static_cast<std::size_t>(cells));
  std::vector<double> win(static_cast<std::size_t>(cells));
  const double clearance = problem.epsilon + kClearanceMargin;

  PlanResult result;
  for (int t = 1; t <= T; ++t) {
    auto& par = parent[t - 1];
    par.assign(static_cast<std::size_t>(cells), -1);
    for (long y = 0; y < ny; ++y) window_min(value, {}, nx, 1, m, row_min, row_arg, y * nx);
    for (long x = 0; x < nx; ++x) window_min(row_min, row_arg, ny, nx, m, win, par, x);
    bool any = false;
    for (long c = 0; c < cells; ++c) {
      const Eigen::Vector2d p = point(c);
      const bool free = std::any_of(problem.free_space.begin(), problem.free_space.end(),
                                    [&](const Rect& r) { return r.contains(p); });
      if (win[c] == kInf || !free || (p - problem.predictions[t - 1]).norm() < clearance) {
        value[c] = kInf;
        continue;
      }
      value[c] = win[c] + (problem.goal - p).squaredNorm();
      any = true;
    }
    if (!any) {
      result.states.assign(static_cast<std::size_t>(T) + 1, problem.start);
      result.objective = plan_objective(problem, result.states);
      result.feasible = false;
      result.most_constrained_step = t;
      return result;
    }
  }

  long cell = T == 0 ? start_cell
                     : static_cast<long>(std::min_element(value.begin(), value.end()) - value.begin());
  result.states.assign(static_cast<std::size_t>(T) + 1, problem.start);
  for (int t = T; t >= 1; --t) {
    result.states[t] = point(cell);
    cell = parent[t - 1][cell];
  }
  result.objective = plan_objective(problem, result.states);
  result.feasible = true;
  return result;
}

double grid_tolerance(const PlanProblem& problem, const PlanResult& oracle, double grid_step) {
  const double cell = std::sqrt(2.0) * grid_step;
  double tol = 0.0;
  for (std::size_t t = 1; t < oracle.states.size(); ++t) {
    const double d = (problem.goal - oracle.states[t]).norm();
    tol += (d + cell) * (d + cell) - d * d;
  }
  return tol;
}

}  // namespace trajsens
