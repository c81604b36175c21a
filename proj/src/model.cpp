#include "facet/model.hpp"

#include <random>
#include <unordered_map>

#include "facet/error.hpp"
#include "facet/kernel.hpp"

namespace facet {

std::vector<Response> simulate_responses(const FacetParameters& params,
                                         const std::vector<Assignment>& assignment,
                                         std::uint64_t seed) {
    std::unordered_map<std::string, const ItemSpec*> items;
    std::unordered_map<std::string, double> severity;
    std::unordered_map<std::string, double> ability;
    for (const auto& item : params.items) {
        validate_item(item);
        items.emplace(item.id, &item);
    }
    for (const auto& r : params.raters) severity.emplace(r.id, r.severity);
    for (const auto& c : params.comments) ability.emplace(c.id, c.ability);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Response> out;
    out.reserve(assignment.size());
    std::vector<double> probs;
    for (const auto& a : assignment) {
        auto item = items.find(a.item_id);
        auto rater = severity.find(a.rater_id);
        auto comment = ability.find(a.comment_id);
        if (item == items.end()) throw InputError("simulate: unknown item '" + a.item_id + "'");
        if (rater == severity.end()) throw InputError("simulate: unknown rater '" + a.rater_id + "'");
        if (comment == ability.end()) throw InputError("simulate: unknown comment '" + a.comment_id + "'");
        const ItemSpec& spec = *item->second;
        probs.resize(spec.steps.size() + 1);
        category_probabilities(comment->second - spec.difficulty - rater->second, spec.steps, probs);

        const double u = unit(rng);
        int rating = spec.num_categories - 1;
        double cumulative = 0.0;
        for (int k = 0; k < spec.num_categories - 1; ++k) {
            cumulative += probs[static_cast<std::size_t>(k)];
            if (u < cumulative) {
                rating = k;
                break;
            }
        }
        out.push_back(Response{a.comment_id, a.rater_id, a.item_id, rating, std::nullopt, std::nullopt});
    }
    return out;
}

CollapsedData collapse_ratings(const std::vector<Response>& responses, const std::vector<ItemSpec>& items) {
    CollapsedData out;
    std::unordered_map<std::string, const std::vector<int>*> maps;
    for (const auto& item : items) {
        ItemSpec copy = item;
        if (item.collapse_map) {
            validate_item(item);
            copy.collapse_map.reset();
            maps.emplace(item.id, &*item.collapse_map);
        }
        out.items.push_back(std::move(copy));
    }
    out.responses.reserve(responses.size());
    for (const auto& r : responses) {
        Response copy = r;
        if (auto it = maps.find(r.item_id); it != maps.end()) {
            const auto& map = *it->second;
            if (r.rating < 0 || static_cast<std::size_t>(r.rating) >= map.size()) {
                throw InputError("rating " + std::to_string(r.rating) + " out of range for item '" + r.item_id + "'");
            }
            copy.rating = map[static_cast<std::size_t>(r.rating)];
        }
        out.responses.push_back(std::move(copy));
    }
    return out;
}

}  // namespace facet
