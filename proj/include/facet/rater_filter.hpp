#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "facet/estimator.hpp"
#include "facet/fit.hpp"
#include "facet/types.hpp"

namespace facet {

struct RaterQuality {
    std::string rater_id;
    std::optional<double> identity_rate;  // unset when no any_identity flags were recorded
    double infit_mnsq = kNaN;
    int batches_completed = 0;
    std::optional<double> duration_seconds;
    double severity = kNaN;
    bool excluded = false;
    std::vector<std::string> exclusion_reasons;
};

// Thresholds are strict: a rater at exactly infit_max is kept.
struct FilterPolicy {
    double infit_max = 1.9;
    double infit_min = 0.37;
    double identity_rate_min = 0.20;
    std::optional<double> severity_abs_max;
    std::optional<double> duration_min_seconds;
    // Extension: also drop raters above this quantile of infit (e.g. 0.95).
    std::optional<double> infit_upper_quantile;
    int rounds = 4;

    void validate() const;  // throws ConfigError
};

// Optional per-rater metadata that the response file does not carry.
struct RaterMetadata {
    std::unordered_map<std::string, int> batches_completed;
    std::unordered_map<std::string, double> duration_seconds;
};

std::vector<RaterQuality> compute_rater_quality(const std::vector<Response>& responses, const FitReport& fit,
                                                const RaterMetadata& metadata = {},
                                                std::vector<std::string>* warnings = nullptr);

struct PolicyOutcome {
    std::vector<RaterQuality> kept;      // sorted by rater id
    std::vector<RaterQuality> excluded;  // sorted by rater id, each with every violated rule
};

PolicyOutcome apply_policy(const std::vector<RaterQuality>& qualities, const FilterPolicy& policy);

struct FilterRound {
    int round = 0;
    int raters = 0;
    double log_likelihood = kNaN;
    bool converged = false;
    std::vector<RaterQuality> flagged;
    bool applied = false;  // false on the last permitted round or when refused
    bool refused = false;  // exclusion would have split the response network
};

struct FilterResult {
    EstimationResult final;
    std::vector<FilterRound> audit;
    std::vector<std::string> excluded_raters;
    std::vector<Response> kept_responses;
    std::vector<std::string> warnings;
};

// estimate -> diagnose -> exclude, for at most policy.rounds estimation passes
// or until a pass flags nobody. Throws PipelineError if every rater would go.
FilterResult filter_and_refit(const std::vector<Response>& responses, const std::vector<ItemSpec>& items,
                              const FilterPolicy& policy, const EstimationConfig& config = {},
                              const RaterMetadata& metadata = {});

}  // namespace facet
