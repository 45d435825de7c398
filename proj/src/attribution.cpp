#include "trajsens/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trajsens/parallel.hpp"
#include "trajsens/seed.hpp"

namespace trajsens {

double ade(const Positions& pred, const Positions& truth) {
  if (pred.rows() != truth.rows()) {
    throw ValidationError("ade: prediction has " + std::to_string(pred.rows()) +
                          " steps, ground truth " + std::to_string(truth.rows()));
  }
  if (pred.rows() < 1) throw ValidationError("ade: empty trajectories");
  return (pred - truth).rowwise().norm().mean();
}

std::optional<double> percent_increase(double base_ade, double pert_ade) {
  if (!(base_ade >= 0.0) || !(pert_ade >= 0.0)) {
    throw ValidationError("percent_increase: ADE values must be >= 0");
  }
  if (base_ade == 0.0) return std::nullopt;
  return (pert_ade - base_ade) / base_ade;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile: empty set");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

QuartileSummary quartiles(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("quartiles: empty set");
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  QuartileSummary q;
  q.q1 = quantile_sorted(s, 0.25);
  q.q2 = quantile_sorted(s, 0.5);
  q.q3 = quantile_sorted(s, 0.75);
  q.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  q.n = s.size();
  return q;
}

bool dominates(const QuartileSummary& a, const QuartileSummary& b) {
  return a.q1 > b.q1 && a.q2 > b.q2 && a.q3 > b.q3;
}

std::optional<std::size_t> dominant_feature(std::span<const QuartileSummary> summaries) {
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    bool all = true;
    for (std::size_t j = 0; j < summaries.size() && all; ++j) {
      if (j != i && !dominates(summaries[i], summaries[j])) all = false;
    }
    if (all && summaries.size() >= 2) return i;
  }
  return std::nullopt;
}

namespace {

template <typename Fn>
auto annotate(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const OverflowError& e) {
    throw OverflowError(what + ": " + e.what());
  } catch (const DegenerateRangeError& e) {
    throw DegenerateRangeError(what + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(what + ": " + e.what());
  } catch (const NumericDomainError& e) {
    throw NumericDomainError(what + ": " + e.what());
  }
}

std::string spec_label(const PerturbSpec& spec, const SceneInput& scene) {
  return std::string(perturb_kind_name(spec.kind)) + " on " + feature_label(spec.target, &scene);
}

}  // namespace

SceneAttribution attribute_scene(const SceneInput& scene, const PredictorParams& params,
                                 std::span<const PerturbSpec> specs, const Ranges& ranges,
                                 ModeSelection selection, std::uint64_t gradient_seed) {
  SceneAttribution out;
  out.base_ade = ade(predict(scene, params, selection).selected(), scene.ground_truth);

  std::optional<SceneTensors> gradient;
  for (const auto& spec : specs) {
    if (needs_gradient(spec.kind) && !gradient) {
      gradient = input_gradient(scene, params, gradient_seed).grad;
    }
  }
  for (const auto& spec : specs) {
    annotate(spec_label(spec, scene), [&] {
      const Eigen::VectorXd delta =
          build_perturbation(spec, scene, ranges, gradient ? &*gradient : nullptr);
      const SceneInput perturbed = apply(scene, spec.target, delta);
      const double pert = ade(predict(perturbed, params, selection).selected(), scene.ground_truth);
      out.perturbed_ade.push_back(pert);
      out.scores.push_back(percent_increase(out.base_ade, pert));
      return 0;
    });
  }
  return out;
}

std::vector<SensitivitySet> aggregate(std::span<const SceneInput> dataset,
                                      const PredictorParams& params,
                                      std::span<const PerturbSpec> specs,
                                      const AttributionOptions& options) {
  if (dataset.empty()) throw ValidationError("aggregate: empty dataset");
  std::vector<SceneAttribution> per_scene(dataset.size());
  parallel_for(dataset.size(), options.workers, [&](std::size_t i) {
    const SceneInput& scene = dataset[i];
    const std::uint64_t key = scene_fingerprint(scene);
    std::vector<PerturbSpec> local(specs.begin(), specs.end());
    for (auto& s : local) {
      if (s.kind == PerturbKind::Noise) s.seed = derive_seed(s.seed, "noise", key);
    }
    const ModeSelection selection =
        options.selection.kind == ModeSelection::Kind::Sample
            ? ModeSelection::sample(derive_seed(options.selection.seed, "sample", key))
            : options.selection;
    per_scene[i] = attribute_scene(scene, params, local, options.ranges, selection,
                                   derive_seed(options.seed, "gradient", key));
  });

  std::vector<SensitivitySet> sets;
  sets.reserve(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    SensitivitySet set;
    set.feature = specs[k].target;
    set.label = feature_label(specs[k].target, &dataset.front());
    set.kind = specs[k].kind;
    if (specs[k].absolute) set.epsilon = specs[k].magnitude;
    for (const auto& r : per_scene) {
      if (r.scores[k]) {
        set.scores.push_back(*r.scores[k]);
      } else {
        ++set.zero_baseline_count;
      }
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<SensitivitySet> depth_analysis(std::span<const SceneInput> dataset,
                                           const PredictorParams& params, PerturbKind kind,
                                           double magnitude, const AttributionOptions& options) {
  if (dataset.empty()) throw ValidationError("depth_analysis: empty dataset");
  const int target = dataset.front().target_index();
  const int steps = dataset.front().history_length();
  std::vector<PerturbSpec> specs;
  for (int dim = 0; dim < kStateDim; ++dim) {
    for (int step = 0; step < steps; ++step) {
      PerturbSpec s;
      s.kind = kind;
      s.target = FeatureId::state_cell(target, dim, step);
      s.magnitude = magnitude;
      s.seed = derive_seed(options.seed, "depth-noise", static_cast<std::uint64_t>(dim * steps + step));
      specs.push_back(s);
    }
  }
  return aggregate(dataset, params, specs, options);
}

std::vector<SensitivitySet> epsilon_sweep(std::span<const SceneInput> dataset,
                                          const PredictorParams& params,
                                          std::span<const double> epsilons,
                                          const AttributionOptions& options) {
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] >= 0.0) || !std::isfinite(epsilons[i])) {
      throw ValidationError("epsilon_sweep: epsilons must be finite and >= 0");
    }
    if (i > 0 && !(epsilons[i] > epsilons[i - 1])) {
      throw ValidationError("epsilon_sweep: epsilons must be strictly ascending");
    }
  }
  std::vector<PerturbSpec> specs;
  for (double eps : epsilons) {
    specs.push_back({PerturbKind::Fgsm, FeatureId::image(), eps, true, 0});
  }
  return aggregate(dataset, params, specs, options);
}

ModeSwitchResult mode_switch_count(const SceneInput& scene, const PredictorParams& params,
                                   const FeatureId& feature, std::span<const double> epsilons,
                                   ModeSelection selection, std::uint64_t gradient_seed) {
  check_feature(scene, feature);
  ModeSwitchResult out;
  if (epsilons.empty()) return out;
  const SceneTensors g = input_gradient(scene, params, gradient_seed).grad;
  const Ranges unused = fixed_ranges();
  for (double eps : epsilons) {
    const PerturbSpec spec{PerturbKind::Fgsm, feature, eps, true, 0};
    const SceneInput perturbed = apply(scene, feature, build_perturbation(spec, scene, unused, &g));
    const PredictionOutput p = predict(perturbed, params, selection);
    if (!out.selected_modes.empty() && p.selected_mode != out.selected_modes.back()) ++out.count;
    out.selected_modes.push_back(p.selected_mode);
    out.mode_weights.push_back(p.mode_weights);
  }
  return out;
}

}  // namespace trajsens
