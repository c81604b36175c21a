#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facet/estimator.hpp"
#include "facet/types.hpp"

namespace facet {

struct RatingDistribution {
    std::string comment_id;
    std::string item_id;
    std::vector<double> probabilities;
};

// Rejects negative entries or sums further than 1e-6 from one; otherwise
// rescales to sum exactly to one. Throws InputError.
void normalize_distribution(RatingDistribution& d);

enum class Aggregation { MeanTheta, MedianTheta };

struct PlausibleValueConfig {
    int replications = 32;
    std::uint64_t seed = 0;
    Aggregation aggregation = Aggregation::MeanTheta;
    bool keep_replications = false;
};

struct RawScoreRow {
    int raw_score = 0;
    double theta = 0.0;
    double se = 0.0;
};

// Raw score -> ability for one rating on every anchored item by a single
// rater of severity 0. Interior scores use `method`; scores 0 and max always
// use WLE so the table stays finite.
std::vector<RawScoreRow> raw_score_table(const std::vector<ItemSpec>& anchored_items,
                                         AbilityMethod method = AbilityMethod::WLE);

struct ModalScore {
    std::string comment_id;
    double theta = 0.0;
    double se = 0.0;
    int raw_score = 0;
};

struct PlausibleScore {
    std::string comment_id;
    double theta = 0.0;      // aggregate over replications
    double theta_sd = 0.0;   // sample SD over replications, 0 when R = 1
    double raw_mean = 0.0;
    std::vector<double> replications;  // filled when requested
};

// Argmax category per item (ties go to the lower category), summed and
// mapped through the raw-score table. Comments in first-seen order. Throws
// MissingDataError listing the items a comment lacks.
std::vector<ModalScore> score_modal(const std::vector<RatingDistribution>& distributions,
                                    const std::vector<ItemSpec>& anchored_items,
                                    AbilityMethod method = AbilityMethod::WLE);

// R probability-weighted rating vectors per comment, each mapped to theta
// through the raw-score table. Every comment has its own random stream derived
// from (seed, comment id), so results do not depend on input order.
std::vector<PlausibleScore> score_plausible(const std::vector<RatingDistribution>& distributions,
                                            const std::vector<ItemSpec>& anchored_items,
                                            const PlausibleValueConfig& config,
                                            AbilityMethod method = AbilityMethod::WLE);

// Stable 64-bit hash (FNV-1a) used to derive per-comment streams.
std::uint64_t stable_hash(const std::string& text, std::uint64_t seed = 0);

}  // namespace facet
