#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace facet {

double logistic(double x);
double softplus(double x);

// Consistent-rank-logits head: one weight vector shared by K-1 binary tasks
// with ordered biases b_1 = base_bias, b_{k+1} = b_k - softplus(gap_params[k-1]).
struct OrdinalHead {
    std::vector<double> weight;
    double base_bias = 0.0;
    std::vector<double> gap_params;  // K-2 unconstrained values

    int num_categories() const { return static_cast<int>(gap_params.size()) + 2; }
    std::vector<double> thresholds() const;

    // Zero weights, thresholds centred on zero and one logit apart.
    static OrdinalHead make(std::size_t dim, int categories);
    // Recover the parameterization from explicit non-increasing thresholds.
    static OrdinalHead from_thresholds(std::vector<double> weight, std::span<const double> thresholds);
};

struct OrdinalOutput {
    std::vector<double> cumulative;   // P(y > k-1), k = 1..K-1
    std::vector<double> categorical;  // P(y = k), k = 0..K-1
};

OrdinalOutput ordinal_forward(const OrdinalHead& head, std::span<const double> features);
// Same activation from a precomputed score w.x and thresholds.
OrdinalOutput ordinal_activation(double score, std::span<const double> thresholds);

// Sum of the K-1 binary cross-entropies, probabilities clamped to [1e-12, 1-1e-12].
// task_weights, when given, has K-1 entries.
double ordinal_cross_entropy(std::span<const double> cumulative, int label,
                             std::span<const double> task_weights = {});

struct OrdinalGradient {
    std::vector<double> weight;
    double base_bias = 0.0;
    std::vector<double> gap_params;
    std::vector<double> features;  // d loss / d input, for backpropagation
};

// Analytic gradient of ordinal_cross_entropy(ordinal_forward(head, x), label).
// The clamp is not differentiated.
OrdinalGradient ordinal_backward(const OrdinalHead& head, std::span<const double> features, int label,
                                 std::span<const double> task_weights = {});

// d loss / d score and d loss / d threshold_k given precomputed thresholds.
// Returns loss. Used by the trainer.
double ordinal_loss_and_slopes(double score, std::span<const double> thresholds, int label,
                               std::span<const double> task_weights, std::span<double> logit_slopes);

bool is_unimodal(std::span<const double> probabilities, double tol = 1e-12);

struct UnimodalityAudit {
    std::size_t checked = 0;
    std::size_t unimodal = 0;
    double fraction() const { return checked ? static_cast<double>(unimodal) / static_cast<double>(checked) : 1.0; }
};

}  // namespace facet
