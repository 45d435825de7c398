#pragma once

// Yeo-Johnson power transform and boxplot summaries.

#include <span>
#include <vector>

namespace trajsens {

/// Yeo-Johnson transform, defined for every real x and finite lambda:
///   x >= 0:  ((x + 1)^l - 1) / l        (l != 0),  log(x + 1)   (l == 0)
///   x <  0: -((1 - x)^(2 - l) - 1) / (2 - l)  (l != 2),  -log(1 - x)  (l == 2)
double yeo_johnson(double x, double lambda);
double yeo_johnson_inverse(double y, double lambda);

struct LambdaFit {
  double lambda = 1.0;
  bool degenerate = false;  // zero variance: lambda = 1 is returned
};

/// Lambda on the grid -2, -1.99, ..., 2 maximizing the Gaussian profile
/// log-likelihood of the transformed values; ties keep the smaller lambda.
LambdaFit fit_lambda(std::span<const double> values);

struct TransformedSet {
  double lambda = 1.0;
  bool degenerate = false;
  std::vector<double> values;
};

TransformedSet transform(std::span<const double> values);

struct BoxplotSummary {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double lower_whisker = 0.0;  // furthest datum within 1.5 IQR below the box
  double upper_whisker = 0.0;
  std::vector<double> outliers;  // ascending, never dropped
  std::size_t n = 0;
};

BoxplotSummary boxplot_summary(std::span<const double> values);

}  // namespace trajsens
