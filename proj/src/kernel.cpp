#include "facet/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "facet/error.hpp"

namespace facet {

void category_probabilities(double eta, std::span<const double> steps, std::span<double> out) {
    const std::size_t k = steps.size() + 1;
    // Cumulative log-weights; category 0 carries the empty sum.
    double running = 0.0;
    double top = 0.0;
    out[0] = 0.0;
    for (std::size_t c = 1; c < k; ++c) {
        running += eta - steps[c - 1];
        out[c] = running;
        top = std::max(top, running);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        out[c] = std::exp(out[c] - top);
        total += out[c];
    }
    for (std::size_t c = 0; c < k; ++c) out[c] /= total;
}

std::vector<double> category_probabilities(double theta, const ItemSpec& item, double severity) {
    if (!std::isfinite(theta) || !std::isfinite(severity)) {
        throw InputError("category_probabilities: non-finite theta or severity");
    }
    validate_item(item);
    std::vector<double> probs(item.steps.size() + 1);
    category_probabilities(theta - item.difficulty - severity, item.steps, probs);
    return probs;
}

CategoryMoments category_moments(std::span<const double> probs) {
    CategoryMoments m;
    for (std::size_t c = 0; c < probs.size(); ++c) m.expected += static_cast<double>(c) * probs[c];
    for (std::size_t c = 0; c < probs.size(); ++c) {
        const double d = static_cast<double>(c) - m.expected;
        const double d2 = d * d;
        m.variance += d2 * probs[c];
        m.third += d2 * d * probs[c];
        m.fourth += d2 * d2 * probs[c];
    }
    return m;
}

double expected_score(double theta, const ItemSpec& item, double severity) {
    return category_moments(category_probabilities(theta, item, severity)).expected;
}

double score_variance(double theta, const ItemSpec& item, double severity) {
    return category_moments(category_probabilities(theta, item, severity)).variance;
}

double log_category_probability(double eta, std::span<const double> steps, int x) {
    double running = 0.0;
    double top = 0.0;
    double at_x = 0.0;
    // Two passes over at most a handful of categories; no allocation.
    for (std::size_t c = 1; c <= steps.size(); ++c) {
        running += eta - steps[c - 1];
        top = std::max(top, running);
        if (static_cast<int>(c) == x) at_x = running;
    }
    double total = std::exp(-top);
    running = 0.0;
    for (std::size_t c = 1; c <= steps.size(); ++c) {
        running += eta - steps[c - 1];
        total += std::exp(running - top);
    }
    return at_x - top - std::log(total);
}

}  // namespace facet
