#pragma once

#include <span>
#include <vector>

#include "facet/types.hpp"

namespace facet {

// Moments of the category distribution of one rating event.
struct CategoryMoments {
    double expected = 0.0;   // E[X]
    double variance = 0.0;   // Var[X]
    double third = 0.0;      // E[(X - E)^3]
    double fourth = 0.0;     // E[(X - E)^4]
};

// Faceted partial credit kernel. For eta = theta - difficulty - severity the
// log-odds of category k over k-1 is eta - steps[k-1]. Writes
// steps.size() + 1 probabilities into `out`. Stable for |eta| up to ~700.
void category_probabilities(double eta, std::span<const double> steps, std::span<double> out);

// Throws InputError on non-finite parameters or malformed items.
std::vector<double> category_probabilities(double theta, const ItemSpec& item, double severity);

double expected_score(double theta, const ItemSpec& item, double severity);
double score_variance(double theta, const ItemSpec& item, double severity);

CategoryMoments category_moments(std::span<const double> probs);

// log P(X = x) for one event; avoids forming the full probability vector's log.
double log_category_probability(double eta, std::span<const double> steps, int x);

}  // namespace facet
