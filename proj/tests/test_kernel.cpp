#include <doctest.h>

#include <cmath>
#include <random>

#include "facet/error.hpp"
#include "facet/kernel.hpp"
#include "facet/model.hpp"
#include "support.hpp"

using namespace facet;

namespace {

ItemSpec item_with(int k, double difficulty, std::vector<double> steps) {
    ItemSpec item;
    item.id = "i";
    item.num_categories = k;
    item.difficulty = difficulty;
    item.steps = std::move(steps);
    return item;
}

}  // namespace

TEST_CASE("symmetric three-category item is uniform") {
    const auto p = category_probabilities(0.0, item_with(3, 0.0, {0.0, 0.0}), 0.0);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("weights proportional to 1, e, e^2") {
    const auto p = category_probabilities(1.0, item_with(3, 0.0, {0.0, 0.0}), 0.0);
    const double z = 1.0 + std::exp(1.0) + std::exp(2.0);
    CHECK(p[0] == doctest::Approx(1.0 / z).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(0.0900).epsilon(1e-3));
    CHECK(p[2] == doctest::Approx(0.6652).epsilon(1e-3));
    CHECK(expected_score(1.0, item_with(3, 0.0, {0.0, 0.0}), 0.0) == doctest::Approx(1.5752).epsilon(1e-4));
}

TEST_CASE("binary item log-odds is eta minus step") {
    const auto p = category_probabilities(2.0, item_with(2, 0.5, {0.2}), 0.3);
    CHECK(std::log(p[1] / p[0]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("moments of the uniform case and the upper limit") {
    const auto item = item_with(3, 0.0, {0.0, 0.0});
    CHECK(expected_score(0.0, item, 0.0) == doctest::Approx(1.0));
    CHECK(score_variance(0.0, item, 0.0) == doctest::Approx(2.0 / 3.0));
    CHECK(std::abs(expected_score(50.0, item, 0.0) - 2.0) < 1e-9);
    const auto m = category_moments(category_probabilities(0.0, item, 0.0));
    CHECK(m.third == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(m.fourth == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("stable at extreme locations") {
    const auto item = item_with(5, 0.0, {-1.0, 0.0, 0.5, 0.5});
    for (double theta : {-700.0, -300.0, 300.0, 700.0}) {
        const auto p = category_probabilities(theta, item, 0.0);
        double total = 0.0;
        for (double v : p) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("non-finite parameters are rejected") {
    CHECK_THROWS_AS(category_probabilities(kNaN, item_with(2, 0.0, {0.0}), 0.0), InputError);
    CHECK_THROWS_AS(category_probabilities(0.0, item_with(3, 0.0, {0.0}), 0.0), InputError);
    CHECK_THROWS_AS(category_probabilities(0.0, item_with(2, kInf, {0.0}), 0.0), InputError);
}

TEST_CASE("log probability agrees with the probability vector") {
    const std::vector<double> steps{-0.7, 0.1, 0.9};
    std::vector<double> p(4);
    for (double eta : {-3.0, 0.0, 2.5}) {
        category_probabilities(eta, steps, p);
        for (int k = 0; k < 4; ++k) {
            CHECK(log_category_probability(eta, steps, k) == doctest::Approx(std::log(p[static_cast<std::size_t>(k)])).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: kernel matches the product form and orders response functions") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int n = 0; n < 2000; ++n) {
        const std::vector<double> steps{u(rng), u(rng), u(rng)};
        const double theta = u(rng), delta = u(rng), alpha = u(rng);
        const auto item = item_with(4, delta, steps);
        const auto p = category_probabilities(theta, item, alpha);
        const auto q = support::naive_pcm(theta, delta, alpha, steps);
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(p[k] - q[k]) < 1e-12);

        // severity and difficulty are interchangeable
        const auto shifted = category_probabilities(theta - alpha, item, 0.0);
        const auto harder = category_probabilities(theta, item_with(4, delta + alpha, steps), 0.0);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(std::abs(p[k] - shifted[k]) < 1e-14);
            CHECK(std::abs(p[k] - harder[k]) < 1e-14);
        }
        const double d = std::abs(u(rng)) + 1e-3;
        CHECK(expected_score(theta + d, item, alpha) > expected_score(theta, item, alpha));
        CHECK(expected_score(theta, item_with(4, delta - d, steps), alpha) >= expected_score(theta, item, alpha));
    }
}

TEST_CASE("simulation follows the kernel") {
    FacetParameters params;
    params.items = {item_with(2, -10.0, {0.0})};
    params.items[0].id = "easy";
    params.raters = {RaterSpec{"r", 0.0, kNaN}};
    params.comments = {CommentSpec{"c", 0.0, kNaN, 1.0}};
    std::vector<Assignment> plan(1000, Assignment{"c", "r", "easy"});
    const auto out = simulate_responses(params, plan, 3);
    int ones = 0;
    for (const auto& r : out) ones += r.rating;
    CHECK(ones >= 990);
    CHECK(simulate_responses(params, plan, 3) == out);

    params.items = {item_with(4, 0.3, {-1.0, 0.2, 0.8})};
    params.items[0].id = "easy";
    params.comments[0].ability = 0.5;
    params.raters[0].severity = -0.2;
    std::vector<Assignment> many(100000, Assignment{"c", "r", "easy"});
    std::vector<double> freq(4, 0.0);
    for (const auto& r : simulate_responses(params, many, 9)) freq[static_cast<std::size_t>(r.rating)] += 1e-5;
    const auto p = category_probabilities(0.5, params.items[0], -0.2);
    double tv = 0.0;
    for (std::size_t k = 0; k < 4; ++k) tv += 0.5 * std::abs(freq[k] - p[k]);
    CHECK(tv < 0.01);

    CHECK_THROWS_AS(simulate_responses(params, {Assignment{"c", "nobody", "easy"}}, 1), InputError);
}

TEST_CASE("collapse maps") {
    ItemSpec five = item_with(3, 0.0, {-0.5, 0.5});
    five.id = "five";
    five.collapse_map = std::vector<int>{0, 1, 1, 2, 2};
    ItemSpec plain = item_with(2, 0.0, {0.0});
    plain.id = "plain";
    const std::vector<Response> raw{{"c", "r", "five", 3, std::nullopt, std::nullopt},
                                    {"c", "r", "five", 0, std::nullopt, std::nullopt},
                                    {"c", "r", "plain", 1, std::nullopt, std::nullopt}};
    const auto out = collapse_ratings(raw, {five, plain});
    CHECK(out.responses[0].rating == 2);
    CHECK(out.responses[1].rating == 0);
    CHECK(out.responses[2].rating == 1);
    CHECK(out.items[0].num_categories == 3);
    CHECK_FALSE(out.items[0].collapse_map.has_value());

    ItemSpec identity = item_with(3, 0.0, {-0.5, 0.5});
    identity.id = "five";
    identity.collapse_map = std::vector<int>{0, 1, 2};
    const std::vector<Response> same{{"c", "r", "five", 2, std::nullopt, std::nullopt}};
    CHECK(collapse_ratings(same, {identity}).responses == same);

    std::vector<Response> bad = raw;
    bad[0].rating = 5;
    CHECK_THROWS_AS(collapse_ratings(bad, {five, plain}), InputError);
    ItemSpec broken = five;
    broken.collapse_map = std::vector<int>{0, 2, 1, 2, 2};
    CHECK_THROWS_AS(collapse_ratings(raw, {broken, plain}), InputError);
}

TEST_CASE("collapse map must reach every analysis category") {
    ItemSpec item = item_with(4, 0.0, {-1.0, 0.0, 1.0});
    item.collapse_map = std::vector<int>{0, 0, 1, 2, 3};
    CHECK_NOTHROW(validate_item(item));
    item.collapse_map = std::vector<int>{0, 0, 1, 2, 2};
    CHECK_THROWS_AS(validate_item(item), InputError);
}
