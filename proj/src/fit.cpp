#include "facet/fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <unordered_map>

#include "facet/error.hpp"
#include "facet/estimator.hpp"
#include "facet/kernel.hpp"
#include "facet/polychoric.hpp"

namespace facet {

namespace {

// Running sums for one element.
struct Accumulator {
    int n = 0;
    double sum_z2 = 0.0;
    double sum_sq_res = 0.0;
    double sum_var = 0.0;
    // Regression of residual on V * eta.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    // Point-measure correlation of rating with a measure.
    double px = 0.0, pm = 0.0, pxx = 0.0, pmm = 0.0, pxm = 0.0;

    void add(double x, double expected, double variance, double eta, double measure) {
        const double res = x - expected;
        ++n;
        sum_z2 += res * res / variance;
        sum_sq_res += res * res;
        sum_var += variance;
        const double reg = variance * eta;
        sx += reg;
        sy += res;
        sxx += reg * reg;
        sxy += reg * res;
        px += x;
        pm += measure;
        pxx += x * x;
        pmm += measure * measure;
        pxm += x * measure;
    }

    void finish(ElementFit& out) const {
        out.observation_count = n;
        if (n < 2) return;
        out.outfit_mnsq = sum_z2 / n;
        out.infit_mnsq = sum_var > 0.0 ? sum_sq_res / sum_var : kNaN;
        const double dn = n;
        const double vx = sxx - sx * sx / dn;
        out.discrimination = vx > 1e-300 ? 1.0 + (sxy - sx * sy / dn) / vx : kNaN;
        const double cxx = pxx - px * px / dn;
        const double cmm = pmm - pm * pm / dn;
        const double cxm = pxm - px * pm / dn;
        out.point_measure_corr = (cxx > 1e-300 && cmm > 1e-300) ? std::clamp(cxm / std::sqrt(cxx * cmm), -1.0, 1.0) : kNaN;
    }
};

double reliability_of(const std::vector<std::pair<double, double>>& values, std::vector<std::string>& warnings,
                      const char* facet) {
    int finite = 0;
    for (const auto& [v, se] : values) finite += (std::isfinite(v) && std::isfinite(se)) ? 1 : 0;
    if (finite < 2) return kNaN;
    std::string warning;
    const double r = separation_reliability(values, &warning);
    if (!warning.empty()) warnings.push_back(std::string(facet) + " reliability: " + warning);
    return r;
}

}  // namespace

const ElementFit* FitReport::find(const std::string& facet, const std::string& id) const {
    const auto& list = facet == "item" ? items : facet == "rater" ? raters : comments;
    for (const auto& e : list) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

FitReport fit_statistics(const std::vector<Response>& responses, const FacetParameters& params) {
    IdIndex items, raters, comments;
    for (const auto& i : params.items) items.intern(i.id);
    for (const auto& r : params.raters) raters.intern(r.id);
    for (const auto& c : params.comments) comments.intern(c.id);
    std::vector<Accumulator> ia(params.items.size()), ra(params.raters.size()), ca(params.comments.size());

    FitReport report;
    std::array<double, 64> probs{};
    std::size_t skipped = 0;
    for (const auto& r : responses) {
        const int i = items.at(r.item_id);
        const int j = raters.at(r.rater_id);
        const int c = comments.at(r.comment_id);
        const ItemSpec& item = params.items[static_cast<std::size_t>(i)];
        const double theta = params.comments[static_cast<std::size_t>(c)].ability;
        const double severity = params.raters[static_cast<std::size_t>(j)].severity;
        const double eta = theta - item.difficulty - severity;
        if (!std::isfinite(eta)) {
            ++skipped;
            continue;
        }
        if (r.rating < 0 || r.rating >= item.num_categories || item.steps.size() + 1 > probs.size()) {
            throw InputError("fit_statistics: rating out of range for item '" + r.item_id + "'");
        }
        std::span<double> p(probs.data(), item.steps.size() + 1);
        category_probabilities(eta, item.steps, p);
        const auto m = category_moments(p);
        if (!(m.variance > 0.0)) {
            ++skipped;
            continue;
        }
        const double x = r.rating;
        ia[static_cast<std::size_t>(i)].add(x, m.expected, m.variance, eta, theta);
        ra[static_cast<std::size_t>(j)].add(x, m.expected, m.variance, eta, theta);
        ca[static_cast<std::size_t>(c)].add(x, m.expected, m.variance, eta, -(item.difficulty + severity));
        report.observations += 1;
        report.sum_squared_residuals += (x - m.expected) * (x - m.expected) / m.variance;
    }
    if (skipped > 0) {
        report.warnings.push_back(std::to_string(skipped) + " observations with non-finite or degenerate expectations skipped");
    }

    std::vector<std::pair<double, double>> iv, rv, cv;
    for (std::size_t k = 0; k < params.items.size(); ++k) {
        ElementFit e{params.items[k].id, "item", params.items[k].difficulty};
        ia[k].finish(e);
        report.items.push_back(e);
        iv.emplace_back(params.items[k].difficulty, params.items[k].difficulty_se);
    }
    for (std::size_t k = 0; k < params.raters.size(); ++k) {
        ElementFit e{params.raters[k].id, "rater", params.raters[k].severity};
        ra[k].finish(e);
        report.raters.push_back(e);
        rv.emplace_back(params.raters[k].severity, params.raters[k].severity_se);
    }
    for (std::size_t k = 0; k < params.comments.size(); ++k) {
        ElementFit e{params.comments[k].id, "comment", params.comments[k].ability};
        ca[k].finish(e);
        report.comments.push_back(e);
        cv.emplace_back(params.comments[k].ability, params.comments[k].ability_se);
    }
    report.item_reliability = reliability_of(iv, report.warnings, "item");
    report.rater_reliability = reliability_of(rv, report.warnings, "rater");
    report.comment_reliability = reliability_of(cv, report.warnings, "comment");
    return report;
}

std::vector<ItemMonotonicity> category_monotonicity(const std::vector<Response>& responses,
                                                    const FacetParameters& params) {
    std::unordered_map<std::string, double> ability;
    for (const auto& c : params.comments) ability.emplace(c.id, c.ability);
    std::unordered_map<std::string, std::size_t> item_pos;
    std::vector<ItemMonotonicity> out;
    std::vector<std::vector<double>> sums;
    for (const auto& item : params.items) {
        item_pos.emplace(item.id, out.size());
        ItemMonotonicity m{item.id, {}};
        for (int k = 0; k < item.num_categories; ++k) m.categories.push_back(CategoryMean{k});
        out.push_back(std::move(m));
        sums.emplace_back(static_cast<std::size_t>(item.num_categories), 0.0);
    }
    for (const auto& r : responses) {
        auto it = item_pos.find(r.item_id);
        auto th = ability.find(r.comment_id);
        if (it == item_pos.end() || th == ability.end()) throw InputError("category_monotonicity: unknown id");
        if (!std::isfinite(th->second)) continue;
        auto& cats = out[it->second].categories;
        if (r.rating < 0 || static_cast<std::size_t>(r.rating) >= cats.size()) {
            throw InputError("category_monotonicity: rating out of range");
        }
        cats[static_cast<std::size_t>(r.rating)].count += 1;
        sums[it->second][static_cast<std::size_t>(r.rating)] += th->second;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        double previous = -kInf;
        int observed = 0;
        for (auto& c : out[i].categories) {
            if (c.count == 0) continue;
            c.observed = true;
            c.mean_ability = sums[i][static_cast<std::size_t>(c.category)] / c.count;
            c.ok = c.mean_ability > previous;
            out[i].ok = out[i].ok && c.ok;
            previous = c.mean_ability;
            ++observed;
        }
        out[i].degenerate = observed < 2;
    }
    return out;
}

CorrelationMatrix item_correlations(const std::vector<Response>& responses, int min_pairs) {
    CorrelationMatrix out;
    IdIndex items;
    for (const auto& r : responses) items.intern(r.item_id);
    if (items.size() < 2) throw InputError("item_correlations: needs at least two items");
    out.item_ids = items.names();
    const auto n = static_cast<std::size_t>(items.size());

    // Ratings per (comment, rater) cell.
    std::map<std::pair<std::string, std::string>, std::vector<int>> cells;
    for (const auto& r : responses) {
        auto& cell = cells[{r.comment_id, r.rater_id}];
        if (cell.empty()) cell.assign(n, -1);
        cell[static_cast<std::size_t>(items.at(r.item_id))] = r.rating;
    }
    out.values.assign(n, std::vector<double>(n, 0.0));
    out.methods.assign(n, std::vector<std::string>(n, "self"));
    for (std::size_t a = 0; a < n; ++a) {
        out.values[a][a] = 1.0;
        for (std::size_t b = a + 1; b < n; ++b) {
            std::vector<std::pair<int, int>> pairs;
            for (const auto& [key, cell] : cells) {
                if (cell[a] >= 0 && cell[b] >= 0) pairs.emplace_back(cell[a], cell[b]);
            }
            bool vary_a = false, vary_b = false;
            for (const auto& p : pairs) {
                vary_a = vary_a || p.first != pairs.front().first;
                vary_b = vary_b || p.second != pairs.front().second;
            }
            double value;
            std::string method;
            if (static_cast<int>(pairs.size()) >= min_pairs && vary_a && vary_b) {
                value = polychoric_correlation(pairs);
                method = "polychoric";
            } else {
                std::vector<double> xa, xb;
                for (const auto& p : pairs) {
                    xa.push_back(p.first);
                    xb.push_back(p.second);
                }
                value = pearson_correlation(xa, xb);
                method = "pearson";
                out.warnings.push_back(out.item_ids[a] + "/" + out.item_ids[b] + ": " + std::to_string(pairs.size()) +
                                       " joint observations, Pearson fallback");
                if (!std::isfinite(value)) {
                    value = 0.0;
                    out.warnings.push_back(out.item_ids[a] + "/" + out.item_ids[b] + ": zero variance, reported as 0");
                }
            }
            out.values[a][b] = out.values[b][a] = std::clamp(value, -1.0, 1.0);
            out.methods[a][b] = out.methods[b][a] = method;
        }
    }
    return out;
}

BinaryComparison binary_item_comparison(const std::vector<Response>& responses,
                                        const std::vector<CommentSpec>& abilities,
                                        const std::vector<ItemSpec>& items, const std::string& binary_item_id) {
    const ItemSpec* item = nullptr;
    for (const auto& i : items) {
        if (i.id == binary_item_id) item = &i;
    }
    if (!item) throw ConfigError("binary_item_comparison: item '" + binary_item_id + "' not found");
    if (item->num_categories != 2) {
        throw ConfigError("binary_item_comparison: item '" + binary_item_id + "' has " +
                          std::to_string(item->num_categories) + " categories; collapse it to binary first");
    }
    std::unordered_map<std::string, double> ability;
    for (const auto& c : abilities) ability.emplace(c.id, c.ability);

    IdIndex comments;
    std::vector<std::array<int, 2>> votes;
    for (const auto& r : responses) {
        if (r.item_id != binary_item_id) continue;
        const int c = comments.intern(r.comment_id);
        if (static_cast<std::size_t>(c) == votes.size()) votes.push_back({0, 0});
        votes[static_cast<std::size_t>(c)][r.rating == 1 ? 1 : 0] += 1;
    }
    BinaryComparison out;
    std::vector<double> x, y;
    for (int c = 0; c < comments.size(); ++c) {
        auto th = ability.find(comments.name(c));
        if (th == ability.end() || !std::isfinite(th->second)) continue;
        const auto& v = votes[static_cast<std::size_t>(c)];
        const double total = v[0] + v[1];
        const double rate = std::max(v[0], v[1]) / total;
        const double sign = v[1] > v[0] ? 1.0 : v[0] > v[1] ? -1.0 : 0.0;
        out.comment_ids.push_back(comments.name(c));
        out.agreement_rate.push_back(rate);
        out.signed_agreement.push_back(sign * rate);
        x.push_back(sign * rate);
        y.push_back(th->second);
    }
    const double r = pearson_correlation(x, y);
    if (std::isfinite(r)) {
        out.pearson_correlation = r;
        out.r_squared = r * r;
    } else {
        out.warnings.push_back("zero variance in agreement or ability; correlation reported as 0");
    }
    return out;
}

std::vector<WrightRow> wright_map_export(const FacetParameters& params) {
    std::vector<WrightRow> rows;
    for (const auto& c : params.comments) rows.push_back({c.id, "comment", c.ability, c.ability_se});
    for (const auto& i : params.items) {
        rows.push_back({i.id, "item", i.difficulty, i.difficulty_se});
        for (std::size_t k = 0; k < i.steps.size(); ++k) {
            rows.push_back({i.id + ":" + std::to_string(k + 1), "step", i.steps[k],
                            k < i.step_se.size() ? i.step_se[k] : kNaN});
        }
    }
    for (const auto& r : params.raters) rows.push_back({r.id, "rater", r.severity, r.severity_se});
    return rows;
}

}  // namespace facet
