#pragma once

#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace facet {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Tolerance for the sum-to-zero identification constraints.
inline constexpr double kConstraintTol = 1e-8;

struct ItemSpec {
    std::string id;
    int num_categories = 2;       // analysis categories 0..num_categories-1
    double difficulty = 0.0;      // logits
    std::vector<double> steps;    // num_categories - 1 step thresholds
    // Optional raw-category -> analysis-category map (monotone, onto
    // 0..num_categories-1). Its length is the raw category count.
    std::optional<std::vector<int>> collapse_map;
    double difficulty_se = kNaN;
    std::vector<double> step_se;  // empty when not estimated

    int max_score() const noexcept { return num_categories - 1; }
};

struct RaterSpec {
    std::string id;
    double severity = 0.0;
    double severity_se = kNaN;
};

struct CommentSpec {
    std::string id;
    double ability = 0.0;
    double ability_se = kNaN;
    double sampling_weight = 1.0;  // carried through, never consumed
};

struct Response {
    std::string comment_id;
    std::string rater_id;
    std::string item_id;
    int rating = 0;
    std::optional<bool> any_identity;
    std::optional<double> weight;

    friend bool operator==(const Response&, const Response&) = default;
};

struct FacetParameters {
    std::vector<ItemSpec> items;
    std::vector<RaterSpec> raters;
    std::vector<CommentSpec> comments;
    bool converged = false;
    double log_likelihood = kNaN;

    const ItemSpec* find_item(const std::string& id) const;
    const RaterSpec* find_rater(const std::string& id) const;
    const CommentSpec* find_comment(const std::string& id) const;
};

// Throws InputError when `steps.size() != num_categories - 1`, a value is
// non-finite, or the collapse map is malformed.
void validate_item(const ItemSpec& item);

// Checks the three sum-to-zero identification constraints.
bool satisfies_constraints(const FacetParameters& params, double tol = kConstraintTol);

// Dense index over ids, preserving first-seen order.
class IdIndex {
public:
    IdIndex() = default;
    explicit IdIndex(const std::vector<std::string>& ids);

    int intern(const std::string& id);
    std::optional<int> find(const std::string& id) const;
    int at(const std::string& id) const;  // throws InputError
    const std::string& name(int index) const { return names_[static_cast<std::size_t>(index)]; }
    int size() const noexcept { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::unordered_map<std::string, int> lookup_;
    std::vector<std::string> names_;
};

}  // namespace facet
