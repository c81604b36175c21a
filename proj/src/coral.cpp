#include "facet/coral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "facet/error.hpp"

namespace facet {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

namespace {

double inverse_softplus(double y) {
    if (y <= 0.0) return -745.0;
    if (y > 30.0) return y + std::log(-std::expm1(-y));
    return std::log(std::expm1(y));
}

void check_label(int label, int categories) {
    if (label < 0 || label >= categories) {
        throw InputError("ordinal label " + std::to_string(label) + " outside 0.." + std::to_string(categories - 1));
    }
}

}  // namespace

std::vector<double> OrdinalHead::thresholds() const {
    std::vector<double> b(gap_params.size() + 1);
    b[0] = base_bias;
    for (std::size_t k = 0; k < gap_params.size(); ++k) b[k + 1] = b[k] - softplus(gap_params[k]);
    return b;
}

OrdinalHead OrdinalHead::make(std::size_t dim, int categories) {
    if (categories < 2) throw InputError("ordinal head needs at least two categories");
    OrdinalHead h;
    h.weight.assign(dim, 0.0);
    h.base_bias = 0.5 * (categories - 2);
    h.gap_params.assign(static_cast<std::size_t>(categories - 2), inverse_softplus(1.0));
    return h;
}

OrdinalHead OrdinalHead::from_thresholds(std::vector<double> weight, std::span<const double> thresholds) {
    if (thresholds.empty()) throw InputError("ordinal head needs at least one threshold");
    OrdinalHead h;
    h.weight = std::move(weight);
    h.base_bias = thresholds[0];
    for (std::size_t k = 1; k < thresholds.size(); ++k) {
        const double gap = thresholds[k - 1] - thresholds[k];
        if (gap < 0.0) throw InputError("ordinal thresholds must be non-increasing");
        h.gap_params.push_back(inverse_softplus(gap));
    }
    return h;
}

OrdinalOutput ordinal_activation(double score, std::span<const double> thresholds) {
    const std::size_t m = thresholds.size();
    OrdinalOutput out;
    out.cumulative.resize(m);
    out.categorical.resize(m + 1);
    for (std::size_t k = 0; k < m; ++k) out.cumulative[k] = logistic(score + thresholds[k]);
    out.categorical[0] = 1.0 - out.cumulative[0];
    for (std::size_t k = 1; k < m; ++k) out.categorical[k] = std::max(0.0, out.cumulative[k - 1] - out.cumulative[k]);
    out.categorical[m] = out.cumulative[m - 1];
    return out;
}

OrdinalOutput ordinal_forward(const OrdinalHead& head, std::span<const double> features) {
    if (features.size() != head.weight.size()) {
        throw InputError("ordinal_forward: feature dimension " + std::to_string(features.size()) +
                         " does not match weight dimension " + std::to_string(head.weight.size()));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j) z += head.weight[j] * features[j];
    const auto b = head.thresholds();
    return ordinal_activation(z, b);
}

double ordinal_cross_entropy(std::span<const double> cumulative, int label, std::span<const double> task_weights) {
    const int categories = static_cast<int>(cumulative.size()) + 1;
    check_label(label, categories);
    if (!task_weights.empty() && task_weights.size() != cumulative.size()) {
        throw InputError("ordinal_cross_entropy: task weight count mismatch");
    }
    constexpr double eps = 1e-12;
    double loss = 0.0;
    for (std::size_t k = 0; k < cumulative.size(); ++k) {
        const double c = std::clamp(cumulative[k], eps, 1.0 - eps);
        const double term = label > static_cast<int>(k) ? -std::log(c) : -std::log(1.0 - c);
        loss += (task_weights.empty() ? 1.0 : task_weights[k]) * term;
    }
    return loss;
}

double ordinal_loss_and_slopes(double score, std::span<const double> thresholds, int label,
                               std::span<const double> task_weights, std::span<double> logit_slopes) {
    const std::size_t m = thresholds.size();
    check_label(label, static_cast<int>(m) + 1);
    double loss = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double l = score + thresholds[k];
        const double w = task_weights.empty() ? 1.0 : task_weights[k];
        const bool above = label > static_cast<int>(k);
        // -log sigma(l) = softplus(-l), -log(1 - sigma(l)) = softplus(l)
        loss += w * (above ? softplus(-l) : softplus(l));
        logit_slopes[k] = w * (logistic(l) - (above ? 1.0 : 0.0));
    }
    return loss;
}

OrdinalGradient ordinal_backward(const OrdinalHead& head, std::span<const double> features, int label,
                                 std::span<const double> task_weights) {
    if (features.size() != head.weight.size()) throw InputError("ordinal_backward: feature dimension mismatch");
    const auto b = head.thresholds();
    const std::size_t m = b.size();
    if (!task_weights.empty() && task_weights.size() != m) throw InputError("ordinal_backward: task weight count mismatch");
    double z = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j) z += head.weight[j] * features[j];
    std::vector<double> d(m);
    ordinal_loss_and_slopes(z, b, label, task_weights, d);

    OrdinalGradient g;
    double total = 0.0;
    for (double v : d) total += v;
    g.weight.resize(features.size());
    g.features.resize(features.size());
    for (std::size_t j = 0; j < features.size(); ++j) {
        g.weight[j] = total * features[j];
        g.features[j] = total * head.weight[j];
    }
    g.base_bias = total;
    // b_k depends on gap j (0-based) for every k > j with slope -sigmoid(gap_j).
    g.gap_params.assign(head.gap_params.size(), 0.0);
    double tail = 0.0;
    for (std::size_t k = m; k-- > 1;) {
        tail += d[k];
        g.gap_params[k - 1] = -logistic(head.gap_params[k - 1]) * tail;
    }
    return g;
}

bool is_unimodal(std::span<const double> p, double tol) {
    std::size_t i = 0;
    while (i + 1 < p.size() && p[i + 1] >= p[i] - tol) ++i;
    while (i + 1 < p.size() && p[i + 1] <= p[i] + tol) ++i;
    return i + 1 >= p.size();
}

}  // namespace facet
