#include <algorithm>
#include <limits>

#include "trajsens/scene.hpp"

namespace trajsens {

Ranges fixed_ranges() {
  Ranges r;
  r.range = {80.0, 80.0, 30.0, 30.0, 35.0, 35.0, 7.0, 5.0, 1.0, 10.0, 1.0};
  return r;
}

Ranges compute_ranges(std::span<const SceneInput> dataset, RangeSource source) {
  if (dataset.empty()) throw ValidationError("compute_ranges: empty dataset");
  if (source == RangeSource::Fixed) return fixed_ranges();

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<double, kQuantityCount> lo;
  std::array<double, kQuantityCount> hi;
  lo.fill(inf);
  hi.fill(-inf);
  auto take = [&](Quantity q, double v) {
    const auto i = static_cast<std::size_t>(q);
    lo[i] = std::min(lo[i], v);
    hi[i] = std::max(hi[i], v);
  };

  for (const auto& scene : dataset) {
    for (const auto& a : scene.agents) {
      for (Eigen::Index r = 0; r < a.history.states.rows(); ++r) {
        for (int d = 0; d < kStateDim; ++d) take(static_cast<Quantity>(d), a.history.states(r, d));
      }
    }
    for (Eigen::Index i = 0; i < scene.image.pixels.size(); ++i) {
      take(Quantity::Image, scene.image.pixels[i]);
    }
    for (Eigen::Index i = 0; i < scene.graph.weights.size(); ++i) {
      take(Quantity::EdgeWeight, scene.graph.weights[i]);
    }
  }

  Ranges out;
  for (std::size_t i = 0; i < kQuantityCount; ++i) {
    out.range[i] = hi[i] >= lo[i] ? hi[i] - lo[i] : 0.0;
  }
  // Presence is a synthetic on/off quantity with no spread in data.
  out.range[static_cast<std::size_t>(Quantity::NodePresence)] = 1.0;
  for (std::size_t i = 0; i < kQuantityCount; ++i) out.degenerate[i] = !(out.range[i] > 0.0);
  return out;
}

}  // namespace trajsens
