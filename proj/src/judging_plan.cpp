#include "facet/judging_plan.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "facet/error.hpp"
#include "facet/model.hpp"

namespace facet {

namespace {

std::string batch_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "batch-%04zu", index + 1);
    return buf;
}

std::string stratum_of(const PlanConfig& config, const std::string& comment) {
    auto it = config.strata.find(comment);
    return it == config.strata.end() ? std::string{} : it->second;
}

// Groups dealt into batches: batches[b] holds group indices.
using Deal = std::vector<std::vector<int>>;

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

// Pairwise swaps until no batch holds the same group twice.
bool repair_duplicates(Deal& deal, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick_batch(0, deal.size() - 1);
    for (int pass = 0; pass < 1000; ++pass) {
        bool clean = true;
        for (std::size_t b = 0; b < deal.size(); ++b) {
            auto& batch = deal[b];
            for (std::size_t s = 0; s < batch.size(); ++s) {
                const int g = batch[s];
                if (std::count(batch.begin(), batch.end(), g) < 2) continue;
                clean = false;
                // Look for a partner slot elsewhere that resolves the clash on both sides.
                for (int tries = 0; tries < 4 * static_cast<int>(deal.size()); ++tries) {
                    auto& other = deal[pick_batch(rng)];
                    if (&other == &batch) continue;
                    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, other.size() - 1)(rng);
                    const int h = other[t];
                    if (contains(batch, h) || contains(other, g)) continue;
                    std::swap(batch[s], other[t]);
                    break;
                }
            }
        }
        if (clean) return true;
    }
    return false;
}

int batch_span(const Deal::value_type& groups, const std::vector<std::set<std::string>>& group_strata) {
    std::set<std::string> seen;
    for (int g : groups) seen.insert(group_strata[static_cast<std::size_t>(g)].begin(), group_strata[static_cast<std::size_t>(g)].end());
    return static_cast<int>(seen.size());
}

}  // namespace

JudgingPlan build_plan(const PlanConfig& config, const std::vector<std::string>& original_comments) {
    const int r = config.ratings_per_comment;
    const int g = config.group_size;
    if (r < 1 || g < 1 || config.originals_per_batch < 1 || config.reference_per_batch < 0) {
        throw PlanError("plan: counts must be positive");
    }
    if (config.originals_per_batch % g != 0) {
        throw PlanError("plan: originals_per_batch (" + std::to_string(config.originals_per_batch) +
                        ") is not divisible by group_size (" + std::to_string(g) + ")");
    }
    const auto n = static_cast<int>(original_comments.size());
    if (n == 0 || n % g != 0) {
        throw PlanError("plan: number of originals (" + std::to_string(n) + ") is not a positive multiple of group_size");
    }
    {
        std::unordered_set<std::string> unique(original_comments.begin(), original_comments.end());
        if (static_cast<int>(unique.size()) != n) throw PlanError("plan: duplicate original comment ids");
    }
    const int group_count = n / g;
    const int per_batch = config.originals_per_batch / g;
    if (group_count < per_batch) {
        throw PlanError("plan: " + std::to_string(group_count) + " groups cannot fill batches of " +
                        std::to_string(per_batch) + " distinct groups");
    }
    if ((group_count * r) % per_batch != 0) {
        throw PlanError("plan: " + std::to_string(group_count) + " groups x " + std::to_string(r) +
                        " ratings do not divide into batches of " + std::to_string(per_batch) + " groups");
    }
    if (config.reference_per_batch > 0) {
        if (config.reference_levels.empty()) throw PlanError("plan: reference comments requested but no levels given");
        std::unordered_set<std::string> originals(original_comments.begin(), original_comments.end());
        std::size_t pool = 0;
        for (const auto& level : config.reference_levels) {
            if (level.comments.empty()) throw PlanError("plan: reference level '" + level.tag + "' is empty");
            for (const auto& c : level.comments) {
                if (originals.count(c)) throw PlanError("plan: reference comment '" + c + "' is also an original");
            }
            pool += level.comments.size();
        }
        if (pool < static_cast<std::size_t>(config.reference_per_batch)) {
            throw PlanError("plan: reference pool smaller than reference_per_batch");
        }
    }

    std::mt19937_64 rng(config.seed);
    JudgingPlan plan;

    // Stratified grouping: shuffle within bins, lay bins end to end and deal
    // round-robin so each group draws from spread-out positions.
    std::map<std::string, std::vector<std::string>> bins;
    for (const auto& c : original_comments) bins[stratum_of(config, c)].push_back(c);
    std::vector<std::string> ordered;
    for (auto& [name, members] : bins) {
        std::shuffle(members.begin(), members.end(), rng);
        ordered.insert(ordered.end(), members.begin(), members.end());
    }
    plan.groups.resize(static_cast<std::size_t>(group_count));
    for (std::size_t p = 0; p < ordered.size(); ++p) {
        plan.groups[p % static_cast<std::size_t>(group_count)].push_back(ordered[p]);
    }
    std::vector<std::set<std::string>> group_strata(plan.groups.size());
    for (std::size_t k = 0; k < plan.groups.size(); ++k) {
        for (const auto& c : plan.groups[k]) group_strata[k].insert(stratum_of(config, c));
    }
    const int required_span = std::min(static_cast<int>(bins.size()), per_batch);

    // Shuffle the group slots and deal them; keep the deal whose weakest batch
    // spans the most strata.
    const int batch_count = group_count * r / per_batch;
    Deal best;
    int best_span = -1;
    for (int attempt = 0; attempt < 200 && best_span < required_span; ++attempt) {
        std::vector<int> slots;
        slots.reserve(static_cast<std::size_t>(group_count * r));
        for (int k = 0; k < group_count; ++k) {
            for (int rep = 0; rep < r; ++rep) slots.push_back(k);
        }
        std::shuffle(slots.begin(), slots.end(), rng);
        Deal deal(static_cast<std::size_t>(batch_count));
        for (std::size_t s = 0; s < slots.size(); ++s) deal[s / static_cast<std::size_t>(per_batch)].push_back(slots[s]);
        if (!repair_duplicates(deal, rng)) continue;
        int weakest = required_span;
        for (const auto& b : deal) weakest = std::min(weakest, batch_span(b, group_strata));
        if (weakest > best_span) {
            best_span = weakest;
            best = std::move(deal);
        }
    }
    if (best.empty()) throw PlanError("plan: could not deal groups into batches without repeats");

    const std::size_t levels = config.reference_levels.size();
    for (std::size_t b = 0; b < best.size(); ++b) {
        Batch batch;
        batch.id = batch_name(b);
        for (int k : best[b]) {
            const auto& grp = plan.groups[static_cast<std::size_t>(k)];
            batch.originals.insert(batch.originals.end(), grp.begin(), grp.end());
        }
        if (config.reference_per_batch > 0) {
            std::size_t level = static_cast<std::size_t>(config.reference_per_batch) == levels
                                    ? 0
                                    : std::uniform_int_distribution<std::size_t>(0, levels - 1)(rng);
            int misses = 0;
            while (static_cast<int>(batch.references.size()) < config.reference_per_batch) {
                const auto& pool = config.reference_levels[level].comments;
                std::vector<std::string> free;
                for (const auto& c : pool) {
                    if (std::find(batch.references.begin(), batch.references.end(), c) == batch.references.end()) {
                        free.push_back(c);
                    }
                }
                if (free.empty()) {
                    if (++misses > static_cast<int>(levels)) throw PlanError("plan: reference pool exhausted");
                } else {
                    misses = 0;
                    batch.references.push_back(free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)]);
                }
                level = (level + 1) % levels;
            }
        }
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

std::vector<std::string> check_plan(const JudgingPlan& plan, const PlanConfig& config) {
    std::vector<std::string> problems;
    std::unordered_map<std::string, int> counts;
    std::set<std::string> bins;
    for (const auto& grp : plan.groups) {
        for (const auto& c : grp) {
            counts[c] = 0;
            bins.insert(stratum_of(config, c));
        }
    }
    const int required = std::min(static_cast<int>(bins.size()), config.originals_per_batch / config.group_size);
    for (const auto& batch : plan.batches) {
        std::unordered_set<std::string> seen;
        std::set<std::string> span;
        for (const auto& c : batch.originals) {
            ++counts[c];
            span.insert(stratum_of(config, c));
            if (!seen.insert(c).second) problems.push_back(batch.id + ": duplicate comment " + c);
        }
        for (const auto& c : batch.references) {
            if (!seen.insert(c).second) problems.push_back(batch.id + ": duplicate comment " + c);
        }
        if (static_cast<int>(span.size()) < required) {
            problems.push_back(batch.id + ": originals span " + std::to_string(span.size()) + " strata, need " +
                               std::to_string(required));
        }
    }
    for (const auto& [c, n] : counts) {
        if (n != config.ratings_per_comment) {
            problems.push_back(c + ": appears in " + std::to_string(n) + " batches");
        }
    }
    return problems;
}

RaterAssignment assign_batches_to_raters(const JudgingPlan& plan, const std::vector<std::string>& raters,
                                         std::uint64_t seed) {
    if (raters.size() < plan.batches.size()) {
        throw PlanError("assign: " + std::to_string(raters.size()) + " raters for " +
                        std::to_string(plan.batches.size()) + " batches");
    }
    std::vector<std::string> pool = raters;
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    RaterAssignment out;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) out.emplace_back(plan.batches[b].id, pool[b]);
    return out;
}

std::vector<Assignment> expand_assignment(const JudgingPlan& plan, const RaterAssignment& raters,
                                          const std::vector<std::string>& item_ids) {
    std::unordered_map<std::string, const Batch*> batches;
    for (const auto& b : plan.batches) batches.emplace(b.id, &b);
    std::vector<Assignment> out;
    for (const auto& [batch_id, rater] : raters) {
        auto it = batches.find(batch_id);
        if (it == batches.end()) throw InputError("assignment names unknown batch '" + batch_id + "'");
        auto emit = [&](const std::vector<std::string>& comments) {
            for (const auto& c : comments) {
                for (const auto& item : item_ids) out.push_back(Assignment{c, rater, item});
            }
        };
        emit(it->second->originals);
        emit(it->second->references);
    }
    return out;
}

}  // namespace facet
