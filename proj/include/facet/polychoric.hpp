#pragma once

#include <span>
#include <utility>
#include <vector>

namespace facet {

// P(X <= h, Y <= k) for standard bivariate normal with correlation rho.
// Infinite limits are allowed.
double bivariate_normal_cdf(double h, double k, double rho);

// Two-step polychoric correlation of paired ordinal ratings: thresholds from
// the marginal cumulative proportions, then rho by one-dimensional likelihood
// maximisation (tolerance 1e-6) on (-0.9999, 0.9999).
double polychoric_correlation(std::span<const std::pair<int, int>> pairs);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace facet
