#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facet/coral.hpp"
#include "facet/scorer.hpp"

namespace facet {

enum class HeadKind { Ordinal, Categorical };

// One review of one comment: the comment's feature vector, the reviewer's
// estimated severity and that reviewer's rating on each item (nullopt = skipped).
struct TrainingRow {
    std::string comment_id;
    std::string rater_id;
    double severity = 0.0;
    std::vector<double> features;
    std::vector<std::optional<int>> labels;
};

struct MultitaskConfig {
    int hidden_units = 64;
    double dropout = 0.10;
    double learning_rate = 0.05;
    int batch_size = 32;
    int epochs = 40;
    std::uint64_t seed = 0;
    HeadKind head = HeadKind::Ordinal;
    std::vector<double> item_weights;  // empty: uniform
    bool standardize_features = true;

    void validate() const;  // throws ConfigError
};

struct CategoricalHead {
    int categories = 0;
    std::vector<double> weight;  // categories x input, row-major
    std::vector<double> bias;
};

struct MultitaskHead {
    HeadKind kind = HeadKind::Ordinal;
    std::vector<std::string> item_ids;
    std::vector<int> categories;
    std::size_t feature_dim = 0;
    int hidden_units = 0;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    // hidden = relu(W [x; severity] + b); W is hidden_units x (feature_dim + 1), row-major.
    std::vector<double> hidden_weight;
    std::vector<double> hidden_bias;
    // Item heads read [hidden; severity].
    std::vector<OrdinalHead> ordinal;
    std::vector<CategoricalHead> categorical;
};

struct TrainingLog {
    std::vector<double> train_loss;       // mean per-row loss, one entry per epoch
    std::vector<double> validation_loss;  // empty without validation rows
};

// Mini-batch gradient descent on the summed per-item cross-entropies; missing
// labels contribute nothing. Throws SplitError when a validation comment also
// appears in training, InputError on malformed rows.
MultitaskHead train_multitask(const std::vector<TrainingRow>& rows, const std::vector<std::string>& item_ids,
                              const std::vector<int>& categories, const MultitaskConfig& config,
                              const std::vector<TrainingRow>* validation = nullptr, TrainingLog* log = nullptr);

struct PredictionRow {
    std::string comment_id;
    double severity = 0.0;
    std::vector<double> features;
};

// One distribution per (row, item), in row order then item order.
std::vector<RatingDistribution> predict_distributions(const MultitaskHead& head, std::span<const PredictionRow> rows);

double multitask_loss(const MultitaskHead& head, const std::vector<TrainingRow>& rows,
                      const std::vector<double>& item_weights = {});

// Share of predicted distributions that are unimodal.
UnimodalityAudit unimodality_audit(const std::vector<RatingDistribution>& distributions);

}  // namespace facet
