#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace facet {

struct ReferenceLevel {
    std::string tag;
    std::vector<std::string> comments;
};

struct PlanConfig {
    int ratings_per_comment = 4;
    int group_size = 4;
    int originals_per_batch = 20;
    int reference_per_batch = 6;
    std::vector<ReferenceLevel> reference_levels;
    std::map<std::string, std::string> strata;  // comment -> bin; missing comments share one bin
    std::uint64_t seed = 0;
};

struct Batch {
    std::string id;
    std::vector<std::string> originals;
    std::vector<std::string> references;

    std::size_t size() const noexcept { return originals.size() + references.size(); }
};

struct JudgingPlan {
    std::vector<std::vector<std::string>> groups;
    std::vector<Batch> batches;
};

// Groups originals (stratified across bins), deals every group into exactly
// `ratings_per_comment` distinct batches and adds stratified reference
// comments to each batch. Deterministic for a given config and input order.
// Throws PlanError when the counts cannot be met.
JudgingPlan build_plan(const PlanConfig& config, const std::vector<std::string>& original_comments);

// Checks the structural invariants; returns one message per violation.
std::vector<std::string> check_plan(const JudgingPlan& plan, const PlanConfig& config);

// batch id -> rater id, one distinct rater per batch.
using RaterAssignment = std::vector<std::pair<std::string, std::string>>;

// Throws PlanError when there are fewer raters than batches.
RaterAssignment assign_batches_to_raters(const JudgingPlan& plan, const std::vector<std::string>& raters,
                                         std::uint64_t seed);

struct Assignment;

// Every (comment, rater, item) triple implied by a realized assignment.
std::vector<Assignment> expand_assignment(const JudgingPlan& plan, const RaterAssignment& raters,
                                          const std::vector<std::string>& item_ids);

}  // namespace facet
