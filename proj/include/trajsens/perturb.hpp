#pragma once

// Additive input perturbations I~ = I + P addressed by FeatureId.

#include <cstdint>
#include <optional>
#include <string_view>

#include "trajsens/core.hpp"
#include "trajsens/scene.hpp"

namespace trajsens {

enum class PerturbKind { Noise, Occlusion, Constant, Gradient, Fgsm };

std::string_view perturb_kind_name(PerturbKind kind);
PerturbKind parse_perturb_kind(std::string_view name);
bool needs_gradient(PerturbKind kind);

struct PerturbSpec {
  PerturbKind kind = PerturbKind::Constant;
  FeatureId target;
  /// Fraction of each scalar's range, or the raw value when `absolute`.
  double magnitude = 0.5;
  bool absolute = false;
  std::uint64_t seed = 0;  // Noise only
};

/// Per-scalar P for the PerturbSpec target, in the target's canonical order.
///   Noise      P_j ~ N(0, m r_j)
///   Occlusion  P = -I  (the perturbed input is zero)
///   Constant   P_j = m r_j
///   Gradient   P_j = m r_j g_j / max|g|
///   Fgsm       P_j = m r_j sign(g_j), sign(0) = 0
/// r_j is the scalar's range (1 in absolute mode). Throws ValidationError for a
/// negative magnitude or a missing gradient, DegenerateRangeError when a
/// range-relative spec touches a zero-range quantity.
Eigen::VectorXd build_perturbation(const PerturbSpec& spec, const SceneInput& scene,
                                   const Ranges& ranges,
                                   const SceneTensors* gradient = nullptr);

/// Copy of `scene` with P added to the target scalars. Pixels are not clipped.
SceneInput apply(const SceneInput& scene, const FeatureId& target, const Eigen::VectorXd& delta);

}  // namespace trajsens
