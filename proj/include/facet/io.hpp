#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facet/judging_plan.hpp"
#include "facet/multitask.hpp"
#include "facet/scorer.hpp"
#include "facet/types.hpp"

namespace facet {

// Decimal text at 12 significant digits; "inf", "-inf" and "nan" otherwise.
std::string format_decimal(double value);
// Inverse of format_decimal; throws InputError on malformed text.
double parse_decimal(const std::string& text);

std::string read_file(const std::string& path);
// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

// Minimal RFC 4180 style parsing: quoted fields, doubled quotes, CRLF or LF.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_field(const std::string& value);

// comment_id,rater_id,item_id,rating,any_identity,weight
inline constexpr const char* kResponseHeader = "comment_id,rater_id,item_id,rating,any_identity,weight";
std::string responses_to_csv(const std::vector<Response>& responses);
// Throws InputError naming the first malformed line.
std::vector<Response> responses_from_csv(const std::string& text);

// {"items":[...],"raters":[...],"comments":[...],"meta":{...}}
inline constexpr const char* kParameterVersion = "facet-parameters/1";
std::string parameters_to_json(const FacetParameters& params);
FacetParameters parameters_from_json(const std::string& text);
// Accepts a parameter file or an items-only file with the same schema.
std::vector<ItemSpec> items_from_json(const std::string& text);
std::string items_to_json(const std::vector<ItemSpec>& items);

// comment_id,item_id,p0,p1,... with one width per item.
std::string distributions_to_csv(const std::vector<RatingDistribution>& distributions);
// Rows off by more than 1e-9 are renormalized, by more than 1e-6 rejected (InputError).
std::vector<RatingDistribution> distributions_from_csv(const std::string& text);

// comment_id,rater_id,severity,x0..x{D-1},y:<item>... (empty label = missing)
struct TrainingTable {
    std::vector<std::string> item_ids;
    std::vector<TrainingRow> rows;
};
std::string training_to_csv(const TrainingTable& table);
TrainingTable training_from_csv(const std::string& text);

std::string modal_scores_to_csv(const std::vector<ModalScore>& scores);
std::string plausible_scores_to_csv(const std::vector<PlausibleScore>& scores);
std::string raw_table_to_csv(const std::vector<RawScoreRow>& table);
std::vector<ModalScore> modal_scores_from_csv(const std::string& text);
std::vector<PlausibleScore> plausible_scores_from_csv(const std::string& text);
std::vector<RawScoreRow> raw_table_from_csv(const std::string& text);

inline constexpr const char* kPlanVersion = "facet-plan/1";
std::string plan_to_json(const JudgingPlan& plan);
JudgingPlan plan_from_json(const std::string& text);

inline constexpr const char* kHeadVersion = "facet-head/1";
std::string head_to_json(const MultitaskHead& head);
MultitaskHead head_from_json(const std::string& text);

struct ValidationReport {
    std::vector<std::string> errors;    // "line N: message"
    std::vector<std::string> warnings;
    std::size_t rows = 0;
    std::size_t comments = 0;
    std::size_t raters = 0;
    std::size_t items = 0;

    bool ok() const noexcept { return errors.empty(); }
    std::string to_json() const;
};

// Line-numbered checks of a response file against an instrument: header,
// field syntax, unknown items, ratings outside 0..K-1, duplicate triples.
ValidationReport validate_responses(const std::string& csv_text, const std::vector<ItemSpec>& items);

// Comment-level partition: a shuffled prefix of round(fraction * comments)
// distinct comments goes to the test side. Deterministic for a seed.
struct ResponseSplit {
    std::vector<Response> train;
    std::vector<Response> test;
};
ResponseSplit split_clustered(const std::vector<Response>& responses, double test_fraction, std::uint64_t seed);

struct TrainingSplit {
    std::vector<TrainingRow> train;
    std::vector<TrainingRow> test;
};
TrainingSplit split_clustered(const std::vector<TrainingRow>& rows, double test_fraction, std::uint64_t seed);

}  // namespace facet
