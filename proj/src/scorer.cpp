#include "facet/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "facet/error.hpp"

namespace facet {

void normalize_distribution(RatingDistribution& d) {
    if (d.probabilities.size() < 2) {
        throw InputError("distribution " + d.comment_id + "/" + d.item_id + ": needs at least two categories");
    }
    double total = 0.0;
    for (double p : d.probabilities) {
        if (!std::isfinite(p) || p < 0.0) {
            throw InputError("distribution " + d.comment_id + "/" + d.item_id + ": negative or non-finite entry");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw InputError("distribution " + d.comment_id + "/" + d.item_id + ": sums to " + std::to_string(total));
    }
    for (double& p : d.probabilities) p /= total;
}

std::uint64_t stable_hash(const std::string& text, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<RawScoreRow> raw_score_table(const std::vector<ItemSpec>& anchored_items, AbilityMethod method) {
    if (anchored_items.empty()) throw InputError("raw_score_table: no items");
    int top = 0;
    for (const auto& item : anchored_items) {
        validate_item(item);
        top += item.max_score();
    }
    std::vector<RawScoreRow> table;
    table.reserve(static_cast<std::size_t>(top + 1));
    std::vector<LocationTerm> terms(anchored_items.size());
    for (int raw = 0; raw <= top; ++raw) {
        // Any rating vector with this sum gives the same estimate.
        int left = raw;
        for (std::size_t i = 0; i < anchored_items.size(); ++i) {
            const int x = std::min(left, anchored_items[i].max_score());
            terms[i] = LocationTerm{-anchored_items[i].difficulty, anchored_items[i].steps, x};
            left -= x;
        }
        const bool extreme = raw == 0 || raw == top;
        const auto est = solve_location(terms, extreme ? AbilityMethod::WLE : method);
        table.push_back(RawScoreRow{raw, est.value, est.se});
    }
    return table;
}

namespace {

struct CommentRow {
    std::string comment_id;
    std::vector<const RatingDistribution*> per_item;  // in anchored item order
};

std::vector<CommentRow> group_by_comment(const std::vector<RatingDistribution>& distributions,
                                         const std::vector<ItemSpec>& items) {
    std::unordered_map<std::string, std::size_t> item_pos;
    for (std::size_t i = 0; i < items.size(); ++i) item_pos.emplace(items[i].id, i);
    IdIndex comments;
    std::vector<CommentRow> rows;
    for (const auto& d : distributions) {
        auto it = item_pos.find(d.item_id);
        if (it == item_pos.end()) throw InputError("distribution for unanchored item '" + d.item_id + "'");
        const auto& item = items[it->second];
        if (d.probabilities.size() != static_cast<std::size_t>(item.num_categories)) {
            throw InputError("distribution " + d.comment_id + "/" + d.item_id + ": " +
                             std::to_string(d.probabilities.size()) + " categories, item has " +
                             std::to_string(item.num_categories));
        }
        const int c = comments.intern(d.comment_id);
        if (static_cast<std::size_t>(c) == rows.size()) rows.push_back(CommentRow{d.comment_id, std::vector<const RatingDistribution*>(items.size(), nullptr)});
        auto& slot = rows[static_cast<std::size_t>(c)].per_item[it->second];
        if (slot) throw InputError("duplicate distribution for " + d.comment_id + "/" + d.item_id);
        slot = &d;
    }
    for (const auto& row : rows) {
        std::string missing;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!row.per_item[i]) missing += (missing.empty() ? "" : ", ") + items[i].id;
        }
        if (!missing.empty()) throw MissingDataError("comment '" + row.comment_id + "' lacks distributions for: " + missing);
    }
    return rows;
}

void check_normalized(const RatingDistribution& d) {
    double total = 0.0;
    for (double p : d.probabilities) {
        if (!std::isfinite(p) || p < 0.0) throw InputError("distribution " + d.comment_id + "/" + d.item_id + ": invalid entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InputError("distribution " + d.comment_id + "/" + d.item_id + ": not normalized");
}

}  // namespace

std::vector<ModalScore> score_modal(const std::vector<RatingDistribution>& distributions,
                                    const std::vector<ItemSpec>& anchored_items, AbilityMethod method) {
    const auto table = raw_score_table(anchored_items, method);
    const auto rows = group_by_comment(distributions, anchored_items);
    std::vector<ModalScore> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        int raw = 0;
        for (const auto* d : row.per_item) {
            check_normalized(*d);
            // max_element returns the first maximum, i.e. the lower category on ties.
            raw += static_cast<int>(std::max_element(d->probabilities.begin(), d->probabilities.end()) - d->probabilities.begin());
        }
        const auto& entry = table[static_cast<std::size_t>(raw)];
        out.push_back(ModalScore{row.comment_id, entry.theta, entry.se, raw});
    }
    return out;
}

std::vector<PlausibleScore> score_plausible(const std::vector<RatingDistribution>& distributions,
                                            const std::vector<ItemSpec>& anchored_items,
                                            const PlausibleValueConfig& config, AbilityMethod method) {
    if (config.replications < 1) throw ConfigError("plausible values: replications must be at least 1");
    const auto table = raw_score_table(anchored_items, method);
    const auto rows = group_by_comment(distributions, anchored_items);
    std::vector<PlausibleScore> out;
    out.reserve(rows.size());
    const auto reps = static_cast<std::size_t>(config.replications);
    std::vector<double> thetas(reps);
    for (const auto& row : rows) {
        for (const auto* d : row.per_item) check_normalized(*d);
        std::mt19937_64 rng(stable_hash(row.comment_id, config.seed));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double raw_total = 0.0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            int raw = 0;
            for (const auto* d : row.per_item) {
                const double u = unit(rng);
                const auto& p = d->probabilities;
                int k = static_cast<int>(p.size()) - 1;
                double cum = 0.0;
                for (std::size_t c = 0; c + 1 < p.size(); ++c) {
                    cum += p[c];
                    if (u < cum) {
                        k = static_cast<int>(c);
                        break;
                    }
                }
                // Never land on a zero-probability top category through rounding.
                while (k > 0 && p[static_cast<std::size_t>(k)] == 0.0) --k;
                raw += k;
            }
            raw_total += raw;
            thetas[rep] = table[static_cast<std::size_t>(raw)].theta;
        }
        PlausibleScore score;
        score.comment_id = row.comment_id;
        score.raw_mean = raw_total / static_cast<double>(reps);
        double shift = 0.0;
        for (double t : thetas) shift += t - thetas.front();
        const double mean = thetas.front() + shift / static_cast<double>(reps);
        double ss = 0.0;
        for (double t : thetas) ss += (t - mean) * (t - mean);
        score.theta_sd = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1)) : 0.0;
        if (config.aggregation == Aggregation::MeanTheta) {
            score.theta = mean;
        } else {
            std::vector<double> sorted = thetas;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t mid = reps / 2;
            score.theta = reps % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        }
        if (config.keep_replications) score.replications = thetas;
        out.push_back(std::move(score));
    }
    return out;
}

}  // namespace facet
