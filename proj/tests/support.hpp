// Shared fixtures and independent reference computations for the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "facet/io.hpp"
#include "facet/judging_plan.hpp"
#include "facet/model.hpp"
#include "facet/types.hpp"

namespace support {

using namespace facet;

inline std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
    return buf;
}

// Partial credit probabilities by the textbook product form, no log-sum-exp.
// Only for moderate parameters.
inline std::vector<double> naive_pcm(double theta, double difficulty, double severity, const std::vector<double>& steps) {
    const double eta = theta - difficulty - severity;
    std::vector<double> num(steps.size() + 1);
    num[0] = 1.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        acc += eta - steps[k];
        num[k + 1] = std::exp(acc);
    }
    double total = 0.0;
    for (double v : num) total += v;
    for (double& v : num) v /= total;
    return num;
}

inline double naive_expected(double theta, double difficulty, double severity, const std::vector<double>& steps) {
    const auto p = naive_pcm(theta, difficulty, severity, steps);
    double e = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) e += static_cast<double>(k) * p[k];
    return e;
}

// Ten 5-category items with centred difficulties and steps.
inline std::vector<ItemSpec> likert_items(int count = 10, double spread = 1.8, double step_scale = 1.0) {
    std::vector<ItemSpec> items;
    for (int i = 0; i < count; ++i) {
        ItemSpec it;
        it.id = numbered("item", static_cast<std::size_t>(i));
        it.num_categories = 5;
        it.difficulty = count > 1 ? -spread + 2.0 * spread * i / (count - 1) : 0.0;
        it.steps = {-1.5 * step_scale, -0.5 * step_scale, 0.5 * step_scale, 1.5 * step_scale};
        items.push_back(it);
    }
    return items;
}

inline std::vector<std::string> ids_of(const std::vector<ItemSpec>& items) {
    std::vector<std::string> out;
    for (const auto& i : items) out.push_back(i.id);
    return out;
}

struct SimulatedStudy {
    FacetParameters truth;
    JudgingPlan plan;
    RaterAssignment raters;
    std::vector<Response> responses;
};

// Comments rated through a generated judging plan, one rater per batch.
inline SimulatedStudy simulate_study(const std::vector<ItemSpec>& items, int comments, int originals_per_batch,
                                     double ability_sd, double severity_sd, std::uint64_t seed) {
    SimulatedStudy s;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    s.truth.items = items;
    std::vector<std::string> comment_ids;
    for (int c = 0; c < comments; ++c) {
        comment_ids.push_back(numbered("c", static_cast<std::size_t>(c)));
        s.truth.comments.push_back(CommentSpec{comment_ids.back(), ability_sd * normal(rng), kNaN, 1.0});
    }
    PlanConfig pc;
    pc.originals_per_batch = originals_per_batch;
    pc.reference_per_batch = 0;
    pc.seed = seed;
    s.plan = build_plan(pc, comment_ids);
    std::vector<std::string> rater_ids;
    double mean = 0.0;
    for (std::size_t r = 0; r < s.plan.batches.size(); ++r) {
        rater_ids.push_back(numbered("r", r));
        s.truth.raters.push_back(RaterSpec{rater_ids.back(), severity_sd * normal(rng), kNaN});
        mean += s.truth.raters.back().severity;
    }
    mean /= static_cast<double>(rater_ids.size());
    for (auto& r : s.truth.raters) r.severity -= mean;
    s.raters = assign_batches_to_raters(s.plan, rater_ids, seed + 1);
    s.responses = simulate_responses(s.truth, expand_assignment(s.plan, s.raters, ids_of(items)), seed + 2);
    return s;
}

inline double rmse_centered(std::vector<double> a, std::vector<double> b) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += std::pow((a[i] - ma) - (b[i] - mb), 2);
    return std::sqrt(ss / static_cast<double>(a.size()));
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Difficulties by id from a calibrated parameter set, in `order`.
inline std::vector<double> item_measures(const FacetParameters& p, const std::vector<ItemSpec>& order) {
    std::vector<double> out;
    for (const auto& i : order) out.push_back(p.find_item(i.id)->difficulty);
    return out;
}

}  // namespace support
