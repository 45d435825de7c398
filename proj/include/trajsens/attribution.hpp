#pragma once

// Percent-increase sensitivity scoring over one-at-a-time perturbations.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajsens/perturb.hpp"
#include "trajsens/predictor.hpp"

namespace trajsens {

/// Mean Euclidean distance between matching (x, y) rows.
double ade(const Positions& pred, const Positions& truth);

/// (pert - base) / base; std::nullopt marks a zero baseline, which is
/// counted separately instead of scored. Negative inputs throw.
std::optional<double> percent_increase(double base_ade, double pert_ade);

struct QuartileSummary {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double mean = 0.0;
  std::size_t n = 0;
};

/// Type-7 quantile (linear interpolation between order statistics) of
/// already sorted data.
double quantile_sorted(std::span<const double> sorted, double p);
QuartileSummary quartiles(std::span<const double> scores);

/// Q1, Q2 and Q3 of `a` all strictly above those of `b`.
bool dominates(const QuartileSummary& a, const QuartileSummary& b);
/// Index of the one summary that dominates every other, if any.
std::optional<std::size_t> dominant_feature(std::span<const QuartileSummary> summaries);

struct SensitivitySet {
  FeatureId feature;
  std::string label;
  PerturbKind kind = PerturbKind::Constant;
  std::optional<double> epsilon;  // absolute-epsilon runs
  std::vector<double> scores;
  std::size_t zero_baseline_count = 0;

  QuartileSummary summary() const { return quartiles(scores); }
};

struct AttributionOptions {
  ModeSelection selection;
  Ranges ranges = fixed_ranges();
  std::uint64_t seed = 0;  // keys gradient and noise streams per scene
  int workers = 1;
};

struct SceneAttribution {
  double base_ade = 0.0;
  std::vector<double> perturbed_ade;
  std::vector<std::optional<double>> scores;  // nullopt: zero baseline
};

/// Baseline prediction once, then one prediction per spec with only that
/// spec's feature perturbed. `gradient_seed` draws the latent sample of the
/// loss whose input gradient drives Gradient/FGSM specs.
SceneAttribution attribute_scene(const SceneInput& scene, const PredictorParams& params,
                                 std::span<const PerturbSpec> specs, const Ranges& ranges,
                                 ModeSelection selection, std::uint64_t gradient_seed);

/// One SensitivitySet per spec over the dataset. Noise and gradient streams
/// are keyed by scene fingerprint, so permuting the dataset permutes scores.
std::vector<SensitivitySet> aggregate(std::span<const SceneInput> dataset,
                                      const PredictorParams& params,
                                      std::span<const PerturbSpec> specs,
                                      const AttributionOptions& options);

/// Sets for every (dim, step) StateCell of the target agent, dim-major:
/// index = dim * (history_steps + 1) + step.
std::vector<SensitivitySet> depth_analysis(std::span<const SceneInput> dataset,
                                           const PredictorParams& params, PerturbKind kind,
                                           double magnitude, const AttributionOptions& options);

/// Image FGSM at each absolute epsilon (>= 0, strictly ascending).
std::vector<SensitivitySet> epsilon_sweep(std::span<const SceneInput> dataset,
                                          const PredictorParams& params,
                                          std::span<const double> epsilons,
                                          const AttributionOptions& options);

struct ModeSwitchResult {
  int count = 0;
  std::vector<int> selected_modes;
  std::vector<Eigen::VectorXd> mode_weights;
};

/// Absolute-epsilon FGSM on `feature` at each epsilon; counts changes of
/// selected_mode between consecutive epsilons.
ModeSwitchResult mode_switch_count(const SceneInput& scene, const PredictorParams& params,
                                   const FeatureId& feature, std::span<const double> epsilons,
                                   ModeSelection selection, std::uint64_t gradient_seed);

}  // namespace trajsens
