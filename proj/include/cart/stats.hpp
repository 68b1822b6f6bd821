// SPDX-License-Identifier: MIT
#pragma once

#include <vector>

namespace cart {

// Standard normal quantile on (0, 1); rational approximation polished by a
// Halley step against erfc, absolute error far below 1e-9.
double normal_quantile(double p);

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;  // NaN when fewer than 3 points
};

// Simple linear regression of y on x.  Requires >= 2 points and nonconstant x.
OlsFit ols_fit(const std::vector<double>& x, const std::vector<double>& y);

struct MomentSummary {
  double mean = 0.0;
  double variance = 0.0;  // central second moment (1/n normalization)
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

MomentSummary moments(const std::vector<double>& v);

}  // namespace cart
