#include "facet/types.hpp"

#include <cmath>

#include "facet/error.hpp"

namespace facet {

namespace {

template <typename T>
const T* find_by_id(const std::vector<T>& elements, const std::string& id) {
    for (const auto& e : elements) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

}  // namespace

const ItemSpec* FacetParameters::find_item(const std::string& id) const { return find_by_id(items, id); }
const RaterSpec* FacetParameters::find_rater(const std::string& id) const { return find_by_id(raters, id); }
const CommentSpec* FacetParameters::find_comment(const std::string& id) const {
    return find_by_id(comments, id);
}

void validate_item(const ItemSpec& item) {
    if (item.num_categories < 2) {
        throw InputError("item '" + item.id + "': needs at least 2 categories");
    }
    if (item.steps.size() != static_cast<std::size_t>(item.num_categories - 1)) {
        throw InputError("item '" + item.id + "': expected " + std::to_string(item.num_categories - 1) +
                         " steps, got " + std::to_string(item.steps.size()));
    }
    if (!std::isfinite(item.difficulty)) throw InputError("item '" + item.id + "': non-finite difficulty");
    for (double s : item.steps) {
        if (!std::isfinite(s)) throw InputError("item '" + item.id + "': non-finite step");
    }
    if (item.collapse_map) {
        const auto& map = *item.collapse_map;
        if (map.empty() || map.front() != 0) {
            throw ConfigError("item '" + item.id + "': collapse map must start at 0");
        }
        for (std::size_t i = 1; i < map.size(); ++i) {
            // Monotone non-decreasing with unit increments is exactly "onto 0..K'-1".
            const int delta = map[i] - map[i - 1];
            if (delta < 0) throw ConfigError("item '" + item.id + "': collapse map not monotone");
            if (delta > 1) throw ConfigError("item '" + item.id + "': collapse map not onto");
        }
        if (map.back() + 1 != item.num_categories) {
            throw ConfigError("item '" + item.id + "': collapse map reaches " + std::to_string(map.back() + 1) +
                              " categories, item has " + std::to_string(item.num_categories));
        }
    }
}

bool satisfies_constraints(const FacetParameters& params, double tol) {
    double sum = 0.0;
    for (const auto& item : params.items) {
        sum += item.difficulty;
        double steps = 0.0;
        for (double s : item.steps) steps += s;
        if (std::abs(steps) > tol) return false;
    }
    if (std::abs(sum) > tol) return false;
    sum = 0.0;
    for (const auto& r : params.raters) sum += r.severity;
    return std::abs(sum) <= tol;
}

IdIndex::IdIndex(const std::vector<std::string>& ids) {
    for (const auto& id : ids) intern(id);
}

int IdIndex::intern(const std::string& id) {
    auto [it, inserted] = lookup_.try_emplace(id, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(id);
    return it->second;
}

std::optional<int> IdIndex::find(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

int IdIndex::at(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) throw InputError("unknown id '" + id + "'");
    return it->second;
}

}  // namespace facet
