#include <optional>

#include "trajsens/planner.hpp"
#include "trajsens/report.hpp"

namespace trajsens {

PlanProblem make_problem(const SceneInput& scene, const Positions& obstacle,
                         const PlanTemplate& tmpl) {
  const int ego = scene.agent_index(tmpl.ego_agent);
  const AgentState now = scene.agents[static_cast<std::size_t>(ego)].history.current();
  PlanProblem p;
  p.start = Eigen::Vector2d(now[kX], now[kY]);
  p.goal = p.start + tmpl.goal_offset;
  p.epsilon = tmpl.epsilon;
  p.kappa = tmpl.kappa;
  for (Eigen::Index t = 0; t < obstacle.rows(); ++t) p.predictions.emplace_back(obstacle(t, 0), obstacle(t, 1));
  for (const Rect& r : tmpl.free_space) {
    p.free_space.push_back({p.start.x() + r.xmin, p.start.y() + r.ymin, p.start.x() + r.xmax,
                            p.start.y() + r.ymax});
  }
  return p;
}

std::string plan_table(const PlanResult& baseline, const PlanResult& attacked) {
  const std::size_t n = std::max(baseline.states.size(), attacked.states.size());
  std::string out = "plan,axis";
  for (std::size_t t = 0; t < n; ++t) out += ",t" + std::to_string(t);
  out += "\n";
  auto rows = [&](const char* name, const PlanResult& r) {
    for (int axis = 0; axis < 2; ++axis) {
      out += std::string(name) + (axis == 0 ? ",x" : ",y");
      for (std::size_t t = 0; t < n; ++t) {
        out += ",";
        if (t < r.states.size()) out += format_number(r.states[t][axis]);
      }
      out += "\n";
    }
  };
  rows("baseline", baseline);
  rows("attacked", attacked);
  return out;
}

DemoResult demo_attack(const SceneInput& scene, const PredictorParams& params,
                       std::span<const PerturbSpec> attack, const PlanTemplate& tmpl,
                       const Ranges& ranges, ModeSelection selection,
                       std::uint64_t gradient_seed, const PlannerOptions& options) {
  DemoResult out;
  out.baseline_prediction = predict(scene, params, selection);
  out.baseline = plan(make_problem(scene, out.baseline_prediction.selected(), tmpl), options);

  std::optional<SceneTensors> gradient;
  for (const auto& spec : attack) {
    if (needs_gradient(spec.kind) && !gradient) gradient = input_gradient(scene, params, gradient_seed).grad;
  }
  SceneInput attacked = scene;
  for (const auto& spec : attack) {
    add_to(attacked, spec.target,
           build_perturbation(spec, scene, ranges, gradient ? &*gradient : nullptr));
  }
  out.attacked_prediction = predict(attacked, params, selection);
  // The ego vehicle's own state is part of the scene, but the plan starts from
  // where it really is.
  out.attacked = plan(make_problem(scene, out.attacked_prediction.selected(), tmpl), options);
  out.table = plan_table(out.baseline, out.attacked);
  return out;
}

}  // namespace trajsens
