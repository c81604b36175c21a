#pragma once

#include <string>
#include <vector>

#include "facet/types.hpp"

namespace facet {

struct ElementFit {
    std::string id;
    std::string facet;  // "item", "rater" or "comment"
    double measure = kNaN;
    int observation_count = 0;
    double infit_mnsq = kNaN;
    double outfit_mnsq = kNaN;
    double discrimination = kNaN;
    double point_measure_corr = kNaN;

    bool defined() const noexcept { return observation_count >= 2; }
};

struct FitReport {
    std::vector<ElementFit> items;
    std::vector<ElementFit> raters;
    std::vector<ElementFit> comments;
    double comment_reliability = kNaN;
    double rater_reliability = kNaN;
    double item_reliability = kNaN;
    std::size_t observations = 0;        // observations with finite expectations
    double sum_squared_residuals = 0.0;  // sum of z^2 over those observations
    std::vector<std::string> warnings;

    const ElementFit* find(const std::string& facet, const std::string& id) const;
};

// Standard Rasch residual statistics from the model moments of every rating.
//   outfit = mean z^2, z^2 = (x - E)^2 / V
//   infit  = sum (x - E)^2 / sum V
//   discrimination = 1 + OLS slope of (x - E) on V * (theta - difficulty - severity)
//   point-measure  = corr(x, theta) for items and raters, corr(x, -(difficulty + severity)) for comments
// Elements with fewer than two observations keep NaN statistics.
FitReport fit_statistics(const std::vector<Response>& responses, const FacetParameters& params);

struct CategoryMean {
    int category = 0;
    double mean_ability = kNaN;
    int count = 0;
    bool observed = false;
    bool ok = true;  // mean above the previous observed category
};

struct ItemMonotonicity {
    std::string item_id;
    std::vector<CategoryMean> categories;
    bool ok = true;
    bool degenerate = false;  // fewer than two observed categories
};

// Mean ability of the comments rated in each category; ok iff strictly
// increasing over the observed categories.
std::vector<ItemMonotonicity> category_monotonicity(const std::vector<Response>& responses,
                                                    const FacetParameters& params);

struct CorrelationMatrix {
    std::vector<std::string> item_ids;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<std::string>> methods;  // "polychoric", "pearson" or "self"
    std::vector<std::string> warnings;
};

// Pairs ratings given by the same rater to the same comment. Polychoric
// (two-step ML) when a pair has at least `min_pairs` joint observations and
// both margins vary, Pearson on the ratings otherwise.
CorrelationMatrix item_correlations(const std::vector<Response>& responses, int min_pairs = 30);

struct BinaryComparison {
    double pearson_correlation = 0.0;
    double r_squared = 0.0;
    std::vector<std::string> comment_ids;
    std::vector<double> agreement_rate;    // share of raters choosing the modal response
    std::vector<double> signed_agreement;  // +rate when the mode is 1, -rate when 0, 0 on ties
    std::vector<std::string> warnings;
};

// Compares rater agreement on a binary item with the continuous measure.
// Throws ConfigError if the item is absent or not binary.
BinaryComparison binary_item_comparison(const std::vector<Response>& responses,
                                        const std::vector<CommentSpec>& abilities,
                                        const std::vector<ItemSpec>& items, const std::string& binary_item_id);

struct WrightRow {
    std::string element;
    std::string facet;  // comment, item, step, rater
    double measure = kNaN;
    double se = kNaN;
};

// Steps appear as "<item>:<k>" with their threshold value relative to the item.
std::vector<WrightRow> wright_map_export(const FacetParameters& params);

}  // namespace facet
