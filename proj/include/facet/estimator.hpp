#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "facet/types.hpp"

namespace facet {

enum class AbilityMethod { MLE, WLE };

struct EstimationConfig {
    int max_iterations = 200;
    double convergence_tol = 1e-4;      // max |parameter change| per iteration, logits
    double newton_step_cap = 1.0;       // logits
    double score_residual_tol = 0.01;   // raw-score units; effective bound is min(this, 10 * convergence_tol)
    std::unordered_map<std::string, double> anchored_items;
    std::unordered_map<std::string, double> anchored_raters;
    std::unordered_map<std::string, std::vector<double>> anchored_steps;
    AbilityMethod ability_estimator = AbilityMethod::WLE;
};

struct EstimationResult {
    FacetParameters parameters;
    int iterations_used = 0;
    double max_residual_change = 0.0;  // max |parameter change| in the last iteration
    double max_score_residual = 0.0;   // max |observed - expected| over free parameters
    std::vector<std::string> extreme_comments;
    std::vector<std::string> extreme_raters;
    std::vector<std::string> extreme_items;
    std::vector<double> history;  // log-likelihood after each iteration
};

// Joint maximum likelihood calibration of the faceted partial credit model.
//
// Facet-wise Newton sweeps (comments, items, steps, raters) with capped,
// back-tracked steps, so the log-likelihood never decreases. After every
// sweep free facets are re-centred (sum of difficulties, of severities and of
// each item's steps is zero) by a shift of all abilities, which leaves the
// likelihood unchanged. A facet with any anchored element is not centred.
//
// Elements with extreme raw scores are removed before calibration (repeatedly,
// since removing one can make another extreme) and measured afterwards from all
// of their observations: WLE for raters and items, and for comments either WLE
// or the +/-infinity MLE sentinel depending on `ability_estimator`.
//
// Throws DisconnectedError when comments and free raters (or free items) split
// into disjoint subsets, InputError for malformed data.
EstimationResult estimate(const std::vector<Response>& responses, const std::vector<ItemSpec>& items,
                          const EstimationConfig& config = {});

// One observation seen from the element being located: eta = location + offset.
struct LocationTerm {
    double offset = 0.0;
    std::span<const double> steps;
    int rating = 0;
};

struct LocationEstimate {
    double value = 0.0;
    double se = kNaN;
    bool extreme = false;  // raw score at its minimum or maximum
};

// Solves S(t) = 0 (MLE) or S(t) + J(t) / (2 I(t)) = 0 (WLE) for a single
// location with every other parameter held fixed. MLE returns -/+infinity for
// extreme raw scores. SE is 1/sqrt(information); for WLE the information of
// the adjusted score function.
LocationEstimate solve_location(std::span<const LocationTerm> terms, AbilityMethod method);

// Ability estimates with items, steps and raters held at anchored values.
// Comments are reported in first-seen order, or in `comment_ids` order when
// given (a listed comment without responses raises MissingDataError).
std::vector<CommentSpec> estimate_abilities_anchored(const std::vector<Response>& responses,
                                                     const std::vector<ItemSpec>& anchored_items,
                                                     const std::vector<RaterSpec>& anchored_raters,
                                                     AbilityMethod method,
                                                     const std::vector<std::string>& comment_ids = {});

// (observed variance - mean squared SE) / observed variance, floored at 0,
// using the population variance. Non-finite entries are skipped. Zero observed
// variance yields 0 and sets `warning` when provided.
double separation_reliability(std::span<const std::pair<double, double>> estimates,
                              std::string* warning = nullptr);

// Total log-likelihood of the responses under `params` (every id must exist).
double log_likelihood(const std::vector<Response>& responses, const FacetParameters& params);

}  // namespace facet
