#include "trajsens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trajsens/attribution.hpp"

namespace trajsens {

// expm1/log1p keep both branches accurate near lambda = 0 and lambda = 2.
double yeo_johnson(double x, double lambda) {
  if (lambda == 1.0) return x;  // both branches reduce to x
  if (x >= 0.0) {
    if (lambda == 0.0) return std::log1p(x);
    return std::expm1(lambda * std::log1p(x)) / lambda;
  }
  const double m = 2.0 - lambda;
  if (m == 0.0) return -std::log1p(-x);
  return -std::expm1(m * std::log1p(-x)) / m;
}

double yeo_johnson_inverse(double y, double lambda) {
  if (lambda == 1.0) return y;
  if (y >= 0.0) {
    if (lambda == 0.0) return std::expm1(y);
    return std::expm1(std::log1p(lambda * y) / lambda);
  }
  const double m = 2.0 - lambda;
  if (m == 0.0) return -std::expm1(-y);
  return -std::expm1(std::log1p(-m * y) / m);
}

LambdaFit fit_lambda(std::span<const double> values) {
  if (values.empty()) throw ValidationError("fit_lambda: empty input");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return {1.0, true};

  const double n = static_cast<double>(values.size());
  double log_jacobian = 0.0;  // sum sign(x) log(|x| + 1)
  for (double x : values) log_jacobian += std::copysign(std::log1p(std::abs(x)), x);

  LambdaFit best{1.0, false};
  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> t(values.size());
  for (int i = 0; i <= 400; ++i) {
    const double lambda = -2.0 + 0.01 * i;
    double mean = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      t[k] = yeo_johnson(values[k], lambda);
      mean += t[k];
    }
    mean /= n;
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= n;
    if (!(var > 0.0) || !std::isfinite(var)) continue;
    const double ll = -0.5 * n * std::log(var) + (lambda - 1.0) * log_jacobian;
    if (ll > best_ll) {
      best_ll = ll;
      best.lambda = lambda;
    }
  }
  return best;
}

TransformedSet transform(std::span<const double> values) {
  const LambdaFit fit = fit_lambda(values);
  TransformedSet out{fit.lambda, fit.degenerate, {}};
  out.values.reserve(values.size());
  for (double v : values) out.values.push_back(yeo_johnson(v, fit.lambda));
  return out;
}

BoxplotSummary boxplot_summary(std::span<const double> values) {
  if (values.empty()) throw ValidationError("boxplot_summary: empty set");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  BoxplotSummary b;
  b.n = s.size();
  b.q1 = quantile_sorted(s, 0.25);
  b.q2 = quantile_sorted(s, 0.5);
  b.q3 = quantile_sorted(s, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.lower_whisker = b.q1;
  b.upper_whisker = b.q3;
  for (double v : s) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
      continue;
    }
    b.lower_whisker = std::min(b.lower_whisker, v);
    b.upper_whisker = std::max(b.upper_whisker, v);
  }
  return b;
}

}  // namespace trajsens
