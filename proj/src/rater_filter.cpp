#include "facet/rater_filter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "facet/error.hpp"
#include "facet/linkage.hpp"

namespace facet {

void FilterPolicy::validate() const {
    if (!(infit_min < infit_max)) throw ConfigError("policy: infit_min must be below infit_max");
    if (infit_min < 0.0) throw ConfigError("policy: infit_min must be nonnegative");
    if (identity_rate_min < 0.0 || identity_rate_min > 1.0) throw ConfigError("policy: identity rate outside [0, 1]");
    if (infit_upper_quantile && (*infit_upper_quantile <= 0.0 || *infit_upper_quantile >= 1.0)) {
        throw ConfigError("policy: infit quantile outside (0, 1)");
    }
    if (severity_abs_max && *severity_abs_max <= 0.0) throw ConfigError("policy: severity bound must be positive");
    if (rounds < 1) throw ConfigError("policy: rounds must be at least 1");
}

std::vector<RaterQuality> compute_rater_quality(const std::vector<Response>& responses, const FitReport& fit,
                                                const RaterMetadata& metadata, std::vector<std::string>* warnings) {
    // rater -> comment -> flagged (nullopt when never recorded)
    std::map<std::string, std::map<std::string, std::optional<bool>>> flags;
    for (const auto& r : responses) {
        auto& cell = flags[r.rater_id][r.comment_id];
        if (r.any_identity) cell = (cell.value_or(false) || *r.any_identity);
    }
    std::vector<RaterQuality> out;
    std::unordered_set<std::string> covered;
    for (const auto& e : fit.raters) {
        covered.insert(e.id);
        auto it = flags.find(e.id);
        if (it == flags.end()) continue;
        RaterQuality q;
        q.rater_id = e.id;
        q.infit_mnsq = e.infit_mnsq;
        q.severity = e.measure;
        int recorded = 0, flagged = 0;
        for (const auto& [comment, flag] : it->second) {
            if (!flag) continue;
            ++recorded;
            flagged += *flag ? 1 : 0;
        }
        if (recorded > 0) {
            q.identity_rate = static_cast<double>(flagged) / recorded;
        } else if (warnings) {
            warnings->push_back("rater " + e.id + ": no identity flags recorded; identity screen skipped");
        }
        if (auto b = metadata.batches_completed.find(e.id); b != metadata.batches_completed.end()) {
            q.batches_completed = b->second;
        }
        if (auto d = metadata.duration_seconds.find(e.id); d != metadata.duration_seconds.end()) {
            q.duration_seconds = d->second;
        }
        out.push_back(std::move(q));
    }
    for (const auto& [rater, comments] : flags) {
        if (!covered.count(rater)) throw InputError("compute_rater_quality: fit report lacks rater '" + rater + "'");
    }
    return out;
}

PolicyOutcome apply_policy(const std::vector<RaterQuality>& qualities, const FilterPolicy& policy) {
    policy.validate();
    std::optional<double> quantile_cut;
    if (policy.infit_upper_quantile) {
        std::vector<double> infits;
        for (const auto& q : qualities) {
            if (std::isfinite(q.infit_mnsq)) infits.push_back(q.infit_mnsq);
        }
        if (!infits.empty()) {
            std::sort(infits.begin(), infits.end());
            const auto pos = static_cast<std::size_t>(std::floor(*policy.infit_upper_quantile * static_cast<double>(infits.size() - 1)));
            quantile_cut = infits[pos];
        }
    }
    PolicyOutcome out;
    for (auto q : qualities) {
        q.exclusion_reasons.clear();
        if (std::isfinite(q.infit_mnsq)) {
            if (q.infit_mnsq > policy.infit_max) q.exclusion_reasons.push_back("infit_high");
            if (q.infit_mnsq < policy.infit_min) q.exclusion_reasons.push_back("infit_low");
            if (quantile_cut && q.infit_mnsq > *quantile_cut) q.exclusion_reasons.push_back("infit_quantile");
        }
        if (q.identity_rate && *q.identity_rate < policy.identity_rate_min) q.exclusion_reasons.push_back("identity_low");
        if (policy.severity_abs_max && std::isfinite(q.severity) && std::abs(q.severity) > *policy.severity_abs_max) {
            q.exclusion_reasons.push_back("severity_extreme");
        }
        if (policy.duration_min_seconds && q.duration_seconds && *q.duration_seconds < *policy.duration_min_seconds) {
            q.exclusion_reasons.push_back("duration_short");
        }
        q.excluded = !q.exclusion_reasons.empty();
        (q.excluded ? out.excluded : out.kept).push_back(std::move(q));
    }
    auto by_id = [](const RaterQuality& a, const RaterQuality& b) { return a.rater_id < b.rater_id; };
    std::sort(out.kept.begin(), out.kept.end(), by_id);
    std::sort(out.excluded.begin(), out.excluded.end(), by_id);
    return out;
}

FilterResult filter_and_refit(const std::vector<Response>& responses, const std::vector<ItemSpec>& items,
                              const FilterPolicy& policy, const EstimationConfig& config,
                              const RaterMetadata& metadata) {
    policy.validate();
    FilterResult result;
    std::vector<Response> current = responses;
    std::set<std::string> excluded;
    for (int round = 1; round <= policy.rounds; ++round) {
        EstimationResult est = estimate(current, items, config);
        const FitReport fit = fit_statistics(current, est.parameters);
        const auto qualities = compute_rater_quality(current, fit, metadata, &result.warnings);
        const PolicyOutcome outcome = apply_policy(qualities, policy);

        FilterRound audit;
        audit.round = round;
        audit.raters = static_cast<int>(est.parameters.raters.size());
        audit.log_likelihood = est.parameters.log_likelihood;
        audit.converged = est.parameters.converged;
        audit.flagged = outcome.excluded;
        result.final = std::move(est);

        if (outcome.excluded.empty()) {
            result.audit.push_back(std::move(audit));
            break;
        }
        if (outcome.kept.empty()) throw PipelineError("filter: every rater would be excluded");
        if (round == policy.rounds) {
            result.audit.push_back(std::move(audit));
            break;
        }
        std::unordered_set<std::string> dropping;
        for (const auto& q : outcome.excluded) dropping.insert(q.rater_id);
        std::vector<Response> remaining;
        for (const auto& r : current) {
            if (!dropping.count(r.rater_id)) remaining.push_back(r);
        }
        const auto labels = component_labels(response_graph(remaining));
        if (!labels.empty() && *std::max_element(labels.begin(), labels.end()) > 0) {
            audit.refused = true;
            result.warnings.push_back("round " + std::to_string(round) +
                                      ": exclusions would split the response network; stopping");
            result.audit.push_back(std::move(audit));
            break;
        }
        audit.applied = true;
        result.audit.push_back(std::move(audit));
        excluded.insert(dropping.begin(), dropping.end());
        current = std::move(remaining);
    }
    result.excluded_raters.assign(excluded.begin(), excluded.end());
    result.kept_responses = std::move(current);
    return result;
}

}  // namespace facet
