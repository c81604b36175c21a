#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facet/types.hpp"

namespace facet {

// One planned rating event.
struct Assignment {
    std::string comment_id;
    std::string rater_id;
    std::string item_id;
};

// Draws each rating independently from the partial credit kernel.
// Deterministic for a given seed; throws InputError on unknown ids.
std::vector<Response> simulate_responses(const FacetParameters& params,
                                         const std::vector<Assignment>& assignment,
                                         std::uint64_t seed);

struct CollapsedData {
    std::vector<Response> responses;
    std::vector<ItemSpec> items;  // maps removed; categories and steps unchanged
};

// Applies every item's collapse_map. Items without a map pass through.
// Throws ConfigError for malformed maps, InputError for raw ratings outside
// the map.
CollapsedData collapse_ratings(const std::vector<Response>& responses, const std::vector<ItemSpec>& items);

}  // namespace facet
