#include "trajsens/perturb.hpp"

#include <cmath>
#include <random>

namespace trajsens {

std::string_view perturb_kind_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::Noise: return "noise";
    case PerturbKind::Occlusion: return "occlusion";
    case PerturbKind::Constant: return "constant";
    case PerturbKind::Gradient: return "gradient";
    case PerturbKind::Fgsm: return "fgsm";
  }
  return "?";
}

PerturbKind parse_perturb_kind(std::string_view name) {
  for (auto k : {PerturbKind::Noise, PerturbKind::Occlusion, PerturbKind::Constant,
                 PerturbKind::Gradient, PerturbKind::Fgsm}) {
    if (perturb_kind_name(k) == name) return k;
  }
  throw ParseError("perturbation kind: unknown kind '" + std::string(name) + "'");
}

bool needs_gradient(PerturbKind kind) {
  return kind == PerturbKind::Gradient || kind == PerturbKind::Fgsm;
}

Eigen::VectorXd build_perturbation(const PerturbSpec& spec, const SceneInput& scene,
                                   const Ranges& ranges, const SceneTensors* gradient) {
  check_feature(scene, spec.target);
  if (!(spec.magnitude >= 0.0) || !std::isfinite(spec.magnitude)) {
    throw ValidationError("perturbation: magnitude must be finite and >= 0");
  }
  if (spec.kind == PerturbKind::Occlusion) return -extract(scene, spec.target);

  const std::vector<Quantity> quantities = feature_quantities(scene, spec.target);
  const auto n = static_cast<Eigen::Index>(quantities.size());
  Eigen::VectorXd scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Quantity q = quantities[static_cast<std::size_t>(j)];
    if (spec.absolute) {
      scale[j] = spec.magnitude;
      continue;
    }
    if (ranges.is_degenerate(q)) {
      throw DegenerateRangeError("perturbation: zero range for " +
                                 feature_label(spec.target, &scene) +
                                 "; feature excluded from range-relative runs");
    }
    scale[j] = spec.magnitude * ranges.of(q);
  }

  switch (spec.kind) {
    case PerturbKind::Noise: {
      std::mt19937_64 rng(spec.seed);
      std::normal_distribution<double> nd(0.0, 1.0);
      Eigen::VectorXd p(n);
      for (Eigen::Index j = 0; j < n; ++j) p[j] = scale[j] * nd(rng);
      return p;
    }
    case PerturbKind::Constant:
      return scale;
    case PerturbKind::Gradient:
    case PerturbKind::Fgsm: {
      if (gradient == nullptr) {
        throw ValidationError(std::string("perturbation: ") +
                              std::string(perturb_kind_name(spec.kind)) + " requires a gradient");
      }
      const Eigen::VectorXd g = extract(*gradient, scene, spec.target);
      if (spec.kind == PerturbKind::Fgsm) {
        return scale.cwiseProduct(g.unaryExpr([](double v) { return double((v > 0) - (v < 0)); }));
      }
      const double gmax = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
      if (gmax == 0.0) return Eigen::VectorXd::Zero(n);
      return scale.cwiseProduct(g / gmax);
    }
    case PerturbKind::Occlusion:
      break;
  }
  return Eigen::VectorXd::Zero(n);
}

SceneInput apply(const SceneInput& scene, const FeatureId& target, const Eigen::VectorXd& delta) {
  SceneInput out = scene;
  add_to(out, target, delta);
  return out;
}

}  // namespace trajsens
