#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "facet/coral.hpp"

using namespace facet;

namespace {

double bce(double p, bool positive) { return positive ? -std::log(p) : -std::log(1.0 - p); }

OrdinalHead random_head(std::mt19937_64& rng, std::size_t dim, int k) {
    std::normal_distribution<double> normal;
    auto head = OrdinalHead::make(dim, k);
    for (auto& w : head.weight) w = normal(rng);
    head.base_bias = normal(rng);
    for (auto& g : head.gap_params) g = normal(rng);
    return head;
}

}  // namespace

TEST_CASE("equal thresholds give a bimodal distribution") {
    const std::vector<double> t{0.0, 0.0};
    const auto out = ordinal_activation(0.0, t);
    CHECK(out.cumulative[0] == doctest::Approx(0.5));
    CHECK(out.cumulative[1] == doctest::Approx(0.5));
    CHECK(out.categorical[0] == doctest::Approx(0.5));
    CHECK(out.categorical[1] == doctest::Approx(0.0));
    CHECK(out.categorical[2] == doctest::Approx(0.5));
    CHECK_FALSE(is_unimodal(out.categorical));
}

TEST_CASE("spread thresholds") {
    const std::vector<double> t{2.0, -2.0};
    const auto out = ordinal_activation(0.0, t);
    CHECK(out.cumulative[0] == doctest::Approx(0.880797).epsilon(1e-6));
    CHECK(out.cumulative[1] == doctest::Approx(0.119203).epsilon(1e-6));
    CHECK(out.categorical[0] == doctest::Approx(0.1192).epsilon(1e-4));
    CHECK(out.categorical[1] == doctest::Approx(0.7616).epsilon(1e-4));
    CHECK(out.categorical[2] == doctest::Approx(0.1192).epsilon(1e-4));
    CHECK(is_unimodal(out.categorical));
    CHECK(ordinal_cross_entropy(out.cumulative, 1) == doctest::Approx(0.2538).epsilon(1e-4));

    const auto top = ordinal_activation(50.0, t);
    CHECK(std::abs(top.categorical[2] - 1.0) < 1e-9);
    CHECK(top.categorical[0] < 1e-9);
}

TEST_CASE("loss values") {
    const std::vector<double> perfect{1.0 - 1e-15, 1e-15};
    CHECK(ordinal_cross_entropy(perfect, 1) < 1e-11);
    const std::vector<double> far{0.9, 0.9}, near{0.9, 0.1};
    CHECK(ordinal_cross_entropy(far, 0) > ordinal_cross_entropy(near, 0));
    const std::vector<double> weights{2.0, 0.5};
    CHECK(ordinal_cross_entropy(near, 1, weights) == doctest::Approx(2.0 * bce(0.9, true) + 0.5 * bce(0.1, false)));
}

TEST_CASE("property: loss is the sum of the binary cross-entropies") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.001, 0.999);
    std::uniform_int_distribution<int> cats(2, 8);
    for (int n = 0; n < 1000; ++n) {
        const int k = cats(rng);
        std::vector<double> cum(static_cast<std::size_t>(k - 1));
        for (auto& c : cum) c = u(rng);
        const int label = std::uniform_int_distribution<int>(0, k - 1)(rng);
        double expected = 0.0;
        for (int t = 0; t < k - 1; ++t) expected += bce(cum[static_cast<std::size_t>(t)], label > t);
        CHECK(std::abs(ordinal_cross_entropy(cum, label) - expected) < 1e-10);
    }
}

TEST_CASE("property: rank consistency and valid distributions") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int n = 0; n < 10000; ++n) {
        const int k = 2 + n % 7;
        auto head = random_head(rng, 3, k);
        for (auto& g : head.gap_params) g *= 3.0;
        const std::vector<double> x{normal(rng), normal(rng), normal(rng)};
        const auto out = ordinal_forward(head, x);
        double total = 0.0;
        for (std::size_t t = 0; t < out.categorical.size(); ++t) {
            CHECK(out.categorical[t] >= 0.0);
            total += out.categorical[t];
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
        for (std::size_t t = 1; t < out.cumulative.size(); ++t) CHECK(out.cumulative[t] <= out.cumulative[t - 1]);
    }
}

TEST_CASE("threshold parameterization round trip") {
    const std::vector<double> t{1.5, 0.2, -0.4, -2.0};
    const auto head = OrdinalHead::from_thresholds({0.3, -0.1}, t);
    CHECK(head.num_categories() == 5);
    const auto back = head.thresholds();
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(back[k] == doctest::Approx(t[k]).epsilon(1e-12));
    const std::vector<double> rising{0.0, 1.0};
    CHECK_THROWS(OrdinalHead::from_thresholds({0.0}, rising));
    const auto fresh = OrdinalHead::make(4, 3);
    CHECK(fresh.thresholds()[0] > fresh.thresholds()[1]);
}

TEST_CASE("gradients match central differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    for (int n = 0; n < 100; ++n) {
        const int k = 2 + n % 5;
        auto head = random_head(rng, 4, k);
        const std::vector<double> x{normal(rng), normal(rng), normal(rng), normal(rng)};
        const int label = n % k;
        const std::vector<double> tw = [&] {
            std::vector<double> w(static_cast<std::size_t>(k - 1));
            for (auto& v : w) v = 0.5 + std::abs(normal(rng));
            return w;
        }();
        const auto g = ordinal_backward(head, x, label, tw);
        auto loss = [&](const OrdinalHead& h, const std::vector<double>& in) {
            return ordinal_cross_entropy(ordinal_forward(h, in).cumulative, label, tw);
        };
        const double h = 1e-5;
        auto check = [&](double analytic, double numeric) {
            CHECK(std::abs(analytic - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
        };
        for (std::size_t j = 0; j < head.weight.size(); ++j) {
            auto up = head, down = head;
            up.weight[j] += h;
            down.weight[j] -= h;
            check(g.weight[j], (loss(up, x) - loss(down, x)) / (2 * h));
            auto xu = x, xd = x;
            xu[j] += h;
            xd[j] -= h;
            check(g.features[j], (loss(head, xu) - loss(head, xd)) / (2 * h));
        }
        auto up = head, down = head;
        up.base_bias += h;
        down.base_bias -= h;
        check(g.base_bias, (loss(up, x) - loss(down, x)) / (2 * h));
        for (std::size_t j = 0; j < head.gap_params.size(); ++j) {
            auto gu = head, gd = head;
            gu.gap_params[j] += h;
            gd.gap_params[j] -= h;
            check(g.gap_params[j], (loss(gu, x) - loss(gd, x)) / (2 * h));
        }
    }
}

TEST_CASE("balanced data is a stationary point") {
    const auto head = OrdinalHead::make(1, 2);
    const std::vector<double> x{1.0};
    const auto a = ordinal_backward(head, x, 0);
    const auto b = ordinal_backward(head, x, 1);
    CHECK(a.weight[0] + b.weight[0] == doctest::Approx(0.0));
    CHECK(a.base_bias + b.base_bias == doctest::Approx(0.0));
}

TEST_CASE("gradient descent separates a bucketized line") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<double> xs(300);
    std::vector<int> ys(300);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = u(rng);
        ys[i] = xs[i] < -1.0 ? 0 : xs[i] < 0.0 ? 1 : xs[i] < 1.5 ? 2 : 3;
    }
    auto head = OrdinalHead::make(1, 4);
    auto accuracy = [&] {
        int hits = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const std::vector<double> x{xs[i]};
            const auto p = ordinal_forward(head, x).categorical;
            hits += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == ys[i];
        }
        return hits / 300.0;
    };
    int steps = 0;
    for (; steps < 2000 && accuracy() < 0.95; ++steps) {
        OrdinalHead grad = head;
        grad.weight[0] = grad.base_bias = 0.0;
        std::fill(grad.gap_params.begin(), grad.gap_params.end(), 0.0);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const std::vector<double> x{xs[i]};
            const auto g = ordinal_backward(head, x, ys[i]);
            grad.weight[0] += g.weight[0] / 300.0;
            grad.base_bias += g.base_bias / 300.0;
            for (std::size_t j = 0; j < g.gap_params.size(); ++j) grad.gap_params[j] += g.gap_params[j] / 300.0;
        }
        head.weight[0] -= 0.5 * grad.weight[0];
        head.base_bias -= 0.5 * grad.base_bias;
        for (std::size_t j = 0; j < head.gap_params.size(); ++j) head.gap_params[j] -= 0.5 * grad.gap_params[j];
    }
    CHECK(accuracy() >= 0.95);
    CHECK(steps <= 2000);
}

TEST_CASE("unimodality audit counts") {
    UnimodalityAudit audit;
    CHECK(audit.fraction() == 1.0);
    audit.checked = 4;
    audit.unimodal = 3;
    CHECK(audit.fraction() == 0.75);
    const std::vector<double> flat{0.25, 0.25, 0.25, 0.25}, valley{0.4, 0.1, 0.5};
    CHECK(is_unimodal(flat));
    CHECK_FALSE(is_unimodal(valley));
}
