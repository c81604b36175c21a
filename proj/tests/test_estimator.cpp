#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "facet/error.hpp"
#include "facet/estimator.hpp"
#include "facet/model.hpp"
#include "support.hpp"

using namespace facet;

namespace {

std::vector<ItemSpec> binary_items(int n) {
    std::vector<ItemSpec> items;
    for (int i = 0; i < n; ++i) {
        ItemSpec it;
        it.id = "b" + std::to_string(i);
        it.num_categories = 2;
        it.steps = {0.0};
        items.push_back(it);
    }
    return items;
}

std::vector<LocationTerm> binary_terms(const std::vector<double>& offsets, const std::vector<int>& ratings,
                                       const std::vector<double>& zero) {
    std::vector<LocationTerm> terms;
    for (std::size_t i = 0; i < offsets.size(); ++i) terms.push_back(LocationTerm{offsets[i], zero, ratings[i]});
    return terms;
}

// Bisection on r - sum p + sum p(1-p)(1-2p) / (2 sum p(1-p)) for binary items.
double wle_root(int raw, int n) {
    auto f = [&](double t) {
        const double p = 1.0 / (1.0 + std::exp(-t));
        return raw - n * p + (1.0 - 2.0 * p) / 2.0;
    };
    double lo = -20.0, hi = 20.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("single-location solver: symmetry, WLE at the extremes, MLE sentinels") {
    const std::vector<double> zero{0.0};
    const std::vector<double> offsets(10, 0.0);
    std::vector<int> ratings(10, 0);
    for (int i = 0; i < 5; ++i) ratings[static_cast<std::size_t>(i)] = 1;
    const auto mid = solve_location(binary_terms(offsets, ratings, zero), AbilityMethod::MLE);
    CHECK(std::abs(mid.value) < 1e-9);
    CHECK(mid.se == doctest::Approx(1.0 / std::sqrt(2.5)));

    std::fill(ratings.begin(), ratings.end(), 0);
    const auto low = solve_location(binary_terms(offsets, ratings, zero), AbilityMethod::WLE);
    CHECK(low.extreme);
    CHECK(low.value == doctest::Approx(-3.0445).epsilon(1e-4));
    CHECK(low.value == doctest::Approx(wle_root(0, 10)).epsilon(1e-8));
    CHECK(solve_location(binary_terms(offsets, ratings, zero), AbilityMethod::MLE).value == -kInf);

    for (int raw = 0; raw <= 10; ++raw) {
        for (int i = 0; i < 10; ++i) ratings[static_cast<std::size_t>(i)] = i < raw ? 1 : 0;
        const auto est = solve_location(binary_terms(offsets, ratings, zero), AbilityMethod::WLE);
        CHECK(est.value == doctest::Approx(wle_root(raw, 10)).epsilon(1e-8));
        CHECK(est.value == doctest::Approx(-wle_root(10 - raw, 10)).epsilon(1e-8));
    }
    std::fill(ratings.begin(), ratings.end(), 1);
    CHECK(solve_location(binary_terms(offsets, ratings, zero), AbilityMethod::MLE).value == kInf);
}

TEST_CASE("separation reliability conventions") {
    const std::vector<std::pair<double, double>> three{{-1, 0.3}, {0, 0.3}, {1, 0.3}};
    const double pop_var = 2.0 / 3.0;
    CHECK(separation_reliability(three) == doctest::Approx((pop_var - 0.09) / pop_var));
    const std::vector<std::pair<double, double>> noisy{{-1, 1.0}, {1, 1.0}};
    CHECK(separation_reliability(noisy) == 0.0);
    const std::vector<std::pair<double, double>> sharp{{-5, 1e-6}, {0, 1e-6}, {5, 1e-6}};
    CHECK(separation_reliability(sharp) == doctest::Approx(1.0).epsilon(1e-9));
    std::string warning;
    const std::vector<std::pair<double, double>> flat{{2, 0.1}, {2, 0.1}};
    CHECK(separation_reliability(flat, &warning) == 0.0);
    CHECK_FALSE(warning.empty());
}

TEST_CASE("calibration satisfies the identification constraints and climbs the likelihood") {
    const auto items = support::likert_items(6, 1.0);
    const auto study = support::simulate_study(items, 60, 12, 1.0, 0.5, 31);
    const auto result = estimate(study.responses, items);
    CHECK(result.parameters.converged);
    CHECK(satisfies_constraints(result.parameters));
    for (std::size_t i = 1; i < result.history.size(); ++i) CHECK(result.history[i] >= result.history[i - 1] - 1e-9);
    CHECK(result.parameters.log_likelihood == doctest::Approx(log_likelihood(study.responses, result.parameters)).epsilon(1e-9));
    CHECK(result.max_score_residual < 0.01);
}

TEST_CASE("raw-score sufficiency and monotonicity within one design") {
    const auto items = support::likert_items(5, 1.0);
    std::vector<Response> responses;
    const std::vector<std::vector<int>> patterns{{4, 0, 2, 1, 3}, {0, 4, 3, 2, 1}, {2, 2, 2, 2, 2}, {1, 1, 1, 1, 1}};
    for (std::size_t c = 0; c < patterns.size(); ++c) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            responses.push_back(Response{"c" + std::to_string(c), "r", items[i].id, patterns[c][i], std::nullopt, std::nullopt});
        }
    }
    const std::vector<RaterSpec> raters{{"r", 0.2, kNaN}};
    const auto theta = estimate_abilities_anchored(responses, items, raters, AbilityMethod::MLE);
    CHECK(std::abs(theta[0].ability - theta[1].ability) < 1e-9);
    CHECK(std::abs(theta[0].ability - theta[2].ability) < 1e-9);
    CHECK(theta[3].ability < theta[2].ability);
}

TEST_CASE("anchored severity shifts abilities one for one") {
    const auto items = support::likert_items(5, 1.0);
    std::vector<Response> responses;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            responses.push_back(Response{"c" + std::to_string(c), "solo", items[i].id, static_cast<int>((c + i) % 5), std::nullopt, std::nullopt});
        }
    }
    for (auto method : {AbilityMethod::MLE, AbilityMethod::WLE}) {
        const auto base = estimate_abilities_anchored(responses, items, {{"solo", 0.0, kNaN}}, method);
        const auto moved = estimate_abilities_anchored(responses, items, {{"solo", 0.75, kNaN}}, method);
        for (std::size_t c = 0; c < base.size(); ++c) CHECK(moved[c].ability - base[c].ability == doctest::Approx(0.75).epsilon(1e-6));
    }
    CHECK_THROWS_AS(estimate_abilities_anchored(responses, items, {{"solo", 0.0, kNaN}}, AbilityMethod::WLE, {"c0", "missing"}),
                    MissingDataError);
}

TEST_CASE("shifting anchored severities moves only the abilities") {
    const auto items = support::likert_items(6, 1.0);
    const auto study = support::simulate_study(items, 80, 16, 1.0, 0.5, 41);
    EstimationConfig a, b;
    a.convergence_tol = b.convergence_tol = 1e-6;
    for (const auto& r : study.truth.raters) {
        a.anchored_raters[r.id] = r.severity;
        b.anchored_raters[r.id] = r.severity + 0.6;
    }
    const auto ra = estimate(study.responses, items, a).parameters;
    const auto rb = estimate(study.responses, items, b).parameters;
    for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(std::abs(ra.items[i].difficulty - rb.items[i].difficulty) < 2e-3);
        for (std::size_t k = 0; k < ra.items[i].steps.size(); ++k) CHECK(std::abs(ra.items[i].steps[k] - rb.items[i].steps[k]) < 2e-3);
    }
    for (std::size_t c = 0; c < ra.comments.size(); ++c) {
        if (std::isfinite(ra.comments[c].ability)) CHECK(rb.comments[c].ability - ra.comments[c].ability == doctest::Approx(0.6).epsilon(2e-3));
    }
}

TEST_CASE("a rater who always answers zero is measured separately") {
    const auto items = support::likert_items(5, 1.0);
    auto study = support::simulate_study(items, 60, 12, 1.0, 0.3, 51);
    const std::string odd = study.truth.raters.front().id;
    for (auto& r : study.responses) {
        if (r.rater_id == odd) r.rating = 0;
    }
    const auto result = estimate(study.responses, items);
    CHECK(result.parameters.converged);
    CHECK(std::find(result.extreme_raters.begin(), result.extreme_raters.end(), odd) != result.extreme_raters.end());
    const auto* rater = result.parameters.find_rater(odd);
    REQUIRE(rater != nullptr);
    CHECK(std::isfinite(rater->severity));
    for (const auto& r : result.parameters.raters) {
        if (r.id != odd) CHECK(rater->severity > r.severity);
    }
}

TEST_CASE("disconnected designs are refused") {
    const auto items = binary_items(2);
    std::vector<Response> responses;
    const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> halves{{{"a", "b"}, {"r1", "r2"}},
                                                                                         {{"x", "y"}, {"r3", "r4"}}};
    for (const auto& [comments, raters] : halves) {
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t r = 0; r < 2; ++r) {
                for (const auto& i : items) {
                    responses.push_back(Response{comments[c], raters[r], i.id, c == r ? 1 : 0, std::nullopt, std::nullopt});
                }
            }
        }
    }
    CHECK_THROWS_AS(estimate(responses, items), DisconnectedError);
}

TEST_CASE("malformed input is rejected") {
    const auto items = binary_items(1);
    CHECK_THROWS_AS(estimate({Response{"c", "r", "nope", 0, std::nullopt, std::nullopt}}, items), InputError);
    CHECK_THROWS_AS(estimate({Response{"c", "r", "b0", 2, std::nullopt, std::nullopt}}, items), InputError);
}

TEST_CASE("more ratings per comment recover items more closely") {
    const auto items = support::likert_items(8, 1.2);
    std::vector<double> truth;
    for (const auto& i : items) truth.push_back(i.difficulty);
    double rmse[2];
    int idx = 0;
    for (int ratings : {4, 16}) {
        auto study = support::SimulatedStudy{};
        std::mt19937_64 rng(61);
        std::normal_distribution<double> normal;
        study.truth.items = items;
        std::vector<std::string> comments;
        for (int c = 0; c < 150; ++c) {
            comments.push_back(support::numbered("c", static_cast<std::size_t>(c)));
            study.truth.comments.push_back(CommentSpec{comments.back(), normal(rng), kNaN, 1.0});
        }
        PlanConfig pc;
        pc.ratings_per_comment = ratings;
        pc.reference_per_batch = 0;
        pc.originals_per_batch = 15;
        pc.group_size = 3;
        const auto plan = build_plan(pc, comments);
        std::vector<std::string> raters;
        for (std::size_t r = 0; r < plan.batches.size(); ++r) {
            raters.push_back(support::numbered("r", r));
            study.truth.raters.push_back(RaterSpec{raters.back(), 0.0, kNaN});
        }
        const auto assignment = assign_batches_to_raters(plan, raters, 62);
        const auto responses = simulate_responses(study.truth, expand_assignment(plan, assignment, support::ids_of(items)), 63);
        rmse[idx++] = support::rmse_centered(support::item_measures(estimate(responses, items).parameters, items), truth);
    }
    CHECK(rmse[1] < rmse[0]);
}
