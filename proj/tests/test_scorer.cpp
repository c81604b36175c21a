#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "facet/error.hpp"
#include "facet/io.hpp"
#include "facet/scorer.hpp"
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

std::vector<ItemSpec> instrument() {
    return items_from_json(read_file(std::string(FACET_DATA_DIR) + "/instrument.json"));
}

// Analysis-scale items, as seen by the scorer.
std::vector<ItemSpec> analysis_items(std::vector<ItemSpec> items) {
    for (auto& i : items) i.collapse_map.reset();
    return items;
}

std::vector<RatingDistribution> random_distributions(const std::vector<ItemSpec>& items, int comments, double concentration,
                                                     std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(concentration, 1.0);
    std::vector<RatingDistribution> out;
    for (int c = 0; c < comments; ++c) {
        for (const auto& item : items) {
            std::vector<double> p(static_cast<std::size_t>(item.num_categories));
            double total = 0.0;
            for (auto& v : p) total += (v = gamma(rng) + 1e-12);
            for (auto& v : p) v /= total;
            out.push_back({"c" + std::to_string(c), item.id, p});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("raw score table of the shipped instrument") {
    const auto items = analysis_items(instrument());
    const auto table = raw_score_table(items);
    REQUIRE(table.size() == 33);
    for (std::size_t r = 0; r < table.size(); ++r) {
        CHECK(table[r].raw_score == static_cast<int>(r));
        CHECK(std::isfinite(table[r].theta));
        CHECK(table[r].se > 0.0);
        if (r > 0) CHECK(table[r].theta > table[r - 1].theta);
    }

    std::mt19937_64 rng(1);
    std::set<double> seen;
    for (double concentration : {0.1, 1.0, 5.0}) {
        const auto d = random_distributions(items, 150, concentration, rng);
        for (const auto& s : score_modal(d, items)) seen.insert(s.theta);
        PlausibleValueConfig pv;
        pv.replications = 1;
        for (const auto& s : score_plausible(d, items, pv)) seen.insert(s.theta);
    }
    CHECK(seen.size() <= 33);
}

TEST_CASE("symmetric binary design") {
    const auto table = raw_score_table(binary_items(10), AbilityMethod::MLE);
    REQUIRE(table.size() == 11);
    CHECK(std::abs(table[5].theta) < 1e-9);
    for (int r = 0; r <= 10; ++r) {
        CHECK(table[static_cast<std::size_t>(r)].theta == doctest::Approx(-table[static_cast<std::size_t>(10 - r)].theta).epsilon(1e-9));
    }
    CHECK(table[0].theta == doctest::Approx(-3.0445).epsilon(1e-4));
}

TEST_CASE("table agrees with anchored ability estimation") {
    const auto items = support::likert_items(4, 1.0);
    const auto table = raw_score_table(items);
    std::vector<Response> responses;
    for (int raw = 0; raw <= 16; ++raw) {
        int left = raw;
        for (const auto& item : items) {
            const int x = std::min(left, 4);
            left -= x;
            responses.push_back({"s" + std::to_string(raw), "anchor", item.id, x, std::nullopt, std::nullopt});
        }
    }
    const auto est = estimate_abilities_anchored(responses, items, {{"anchor", 0.0, kNaN}}, AbilityMethod::WLE);
    for (int raw = 0; raw <= 16; ++raw) CHECK(est[static_cast<std::size_t>(raw)].ability == doctest::Approx(table[static_cast<std::size_t>(raw)].theta).epsilon(1e-8));
}

TEST_CASE("modal scoring uses the argmax with ties to the lower category") {
    auto items = binary_items(2);
    items[0].id = "genocide";
    const std::vector<RatingDistribution> d{{"c", "genocide", {0.90, 0.10}}, {"c", "b1", {0.5, 0.5}}};
    const auto s = score_modal(d, items);
    REQUIRE(s.size() == 1);
    CHECK(s[0].raw_score == 0);
    CHECK(s[0].theta == raw_score_table(items)[0].theta);

    const std::vector<RatingDistribution> yes{{"c", "genocide", {0.40, 0.60}}, {"c", "b1", {0.5, 0.5}}};
    CHECK(score_modal(yes, items)[0].raw_score == 1);
}

TEST_CASE("property: modal score depends only on the argmax") {
    const auto items = support::likert_items(5, 1.0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto d = random_distributions(items, 40, 1.0, rng);
    const auto base = score_modal(d, items);
    for (auto& row : d) {
        const auto top = std::max_element(row.probabilities.begin(), row.probabilities.end()) - row.probabilities.begin();
        double total = 0.0;
        for (std::size_t k = 0; k < row.probabilities.size(); ++k) {
            if (static_cast<long>(k) != top) row.probabilities[k] *= u(rng);
            total += row.probabilities[k];
        }
        for (auto& v : row.probabilities) v /= total;
    }
    const auto perturbed = score_modal(d, items);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(perturbed[i].theta == base[i].theta);
}

TEST_CASE("degenerate distributions reproduce the fixed ratings") {
    const auto items = support::likert_items(5, 1.0);
    const auto table = raw_score_table(items);
    std::vector<RatingDistribution> d;
    std::vector<int> raw(30, 0);
    for (int c = 0; c < 30; ++c) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            const int x = (c * 7 + static_cast<int>(i) * 3) % 5;
            raw[static_cast<std::size_t>(c)] += x;
            std::vector<double> p(5, 0.0);
            p[static_cast<std::size_t>(x)] = 1.0;
            d.push_back({support::numbered("c", static_cast<std::size_t>(c)), items[i].id, p});
        }
    }
    PlausibleValueConfig pv;
    pv.replications = 10;
    pv.keep_replications = true;
    const auto plausible = score_plausible(d, items, pv);
    const auto modal = score_modal(d, items);
    for (std::size_t c = 0; c < 30; ++c) {
        CHECK(plausible[c].theta_sd == 0.0);
        CHECK(plausible[c].theta == modal[c].theta);
        CHECK(modal[c].theta == table[static_cast<std::size_t>(raw[c])].theta);
        CHECK(plausible[c].raw_mean == raw[c]);
        CHECK(plausible[c].replications.size() == 10);
    }
    pv.aggregation = Aggregation::MedianTheta;
    CHECK(score_plausible(d, items, pv)[3].theta == modal[3].theta);
}

namespace {

double replication_tv(const std::vector<ItemSpec>& items, const std::vector<RatingDistribution>& d, int seeds) {
    std::vector<double> exact{1.0};
    for (const auto& row : d) {
        std::vector<double> next(exact.size() + row.probabilities.size() - 1, 0.0);
        for (std::size_t a = 0; a < exact.size(); ++a) {
            for (std::size_t b = 0; b < row.probabilities.size(); ++b) next[a + b] += exact[a] * row.probabilities[b];
        }
        exact = next;
    }
    std::vector<double> observed(exact.size(), 0.0);
    for (int seed = 0; seed < seeds; ++seed) {
        PlausibleValueConfig pv;
        pv.replications = 1;
        pv.seed = static_cast<std::uint64_t>(seed);
        observed[static_cast<std::size_t>(score_plausible(d, items, pv)[0].raw_mean)] += 1.0 / seeds;
    }
    double tv = 0.0;
    for (std::size_t k = 0; k < exact.size(); ++k) tv += 0.5 * std::abs(exact[k] - observed[k]);
    return tv;
}

}  // namespace

TEST_CASE("single replications follow the exact raw-score distribution") {
    auto items = support::likert_items(3, 0.5);
    items[2].num_categories = 3;
    items[2].steps = {-0.3, 0.3};
    const std::vector<RatingDistribution> broad{{"c", items[0].id, {0.1, 0.2, 0.3, 0.25, 0.15}},
                                                {"c", items[1].id, {0.5, 0.0, 0.0, 0.2, 0.3}},
                                                {"c", items[2].id, {0.3, 0.3, 0.4}}};
    CHECK(replication_tv(items, broad, 20000) < 0.02);
}

TEST_CASE("plausible values: determinism, order independence, entropy limit") {
    const auto items = support::likert_items(6, 1.0);
    std::mt19937_64 rng(3);
    auto d = random_distributions(items, 25, 1.0, rng);
    PlausibleValueConfig pv;
    pv.seed = 11;
    const auto a = score_plausible(d, items, pv);
    CHECK(plausible_scores_to_csv(a) == plausible_scores_to_csv(score_plausible(d, items, pv)));
    std::reverse(d.begin(), d.end());
    auto b = score_plausible(d, items, pv);
    std::reverse(b.begin(), b.end());
    CHECK(plausible_scores_to_csv(a) == plausible_scores_to_csv(b));

    double previous = kInf;
    for (double eps : {0.3, 0.1, 0.01, 0.0}) {
        std::vector<RatingDistribution> sharp;
        for (const auto& item : items) {
            std::vector<double> p(5, eps / 4.0);
            p[2] = 1.0 - eps;
            sharp.push_back({"x", item.id, p});
        }
        PlausibleValueConfig many;
        many.replications = 256;
        const double sd = score_plausible(sharp, items, many)[0].theta_sd;
        CHECK(sd <= previous);
        previous = sd;
    }
    CHECK(previous == 0.0);
}

TEST_CASE("missing and malformed inputs") {
    const auto items = binary_items(3);
    const std::vector<RatingDistribution> partial{{"c", "b0", {0.5, 0.5}}, {"c", "b2", {0.5, 0.5}}};
    try {
        score_modal(partial, items);
        FAIL("expected MissingDataError");
    } catch (const MissingDataError& e) {
        CHECK(std::string(e.what()).find("b1") != std::string::npos);
    }
    RatingDistribution negative{"c", "b0", {-0.1, 1.1}};
    CHECK_THROWS_AS(normalize_distribution(negative), InputError);
    RatingDistribution off{"c", "b0", {0.5, 0.6}};
    CHECK_THROWS_AS(normalize_distribution(off), InputError);
    RatingDistribution close{"c", "b0", {0.5, 0.5000001}};
    normalize_distribution(close);
    CHECK(close.probabilities[0] + close.probabilities[1] == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<RatingDistribution> wrong_width{{"c", "b0", {0.2, 0.3, 0.5}}, {"c", "b1", {0.5, 0.5}}, {"c", "b2", {0.5, 0.5}}};
    CHECK_THROWS_AS(score_modal(wrong_width, items), InputError);
    PlausibleValueConfig none;
    none.replications = 0;
    CHECK_THROWS_AS(score_plausible(partial, items, none), ConfigError);
    CHECK(stable_hash("abc", 1) == stable_hash("abc", 1));
    CHECK(stable_hash("abc", 1) != stable_hash("abc", 2));
}
