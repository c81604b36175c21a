#include "facet/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/Dense>

#include "facet/error.hpp"
#include "facet/kernel.hpp"
#include "facet/linkage.hpp"

namespace facet {

namespace {

constexpr int kMaxCategories = 64;
constexpr int kMaxHalvings = 30;

struct Obs {
    int comment;
    int rater;
    int item;
    int x;
};

// Working state of one calibration.
struct Model {
    IdIndex comments, raters, items;
    std::vector<ItemSpec> item_specs;
    std::vector<Obs> obs;
    std::vector<char> active;

    std::vector<double> theta, severity, difficulty;
    std::vector<std::vector<double>> steps;

    std::vector<std::vector<int>> by_comment, by_rater, by_item;
    std::vector<char> comment_extreme, rater_extreme, item_extreme;
    std::vector<char> rater_anchored, item_anchored, steps_anchored;

    double eta(const Obs& o) const {
        return theta[static_cast<std::size_t>(o.comment)] - difficulty[static_cast<std::size_t>(o.item)] -
               severity[static_cast<std::size_t>(o.rater)];
    }
    std::span<const double> steps_of(const Obs& o) const { return steps[static_cast<std::size_t>(o.item)]; }
};

template <typename T>
T& at(std::vector<T>& v, int i) {
    return v[static_cast<std::size_t>(i)];
}
template <typename T>
const T& at(const std::vector<T>& v, int i) {
    return v[static_cast<std::size_t>(i)];
}

struct ScoreSums {
    double residual = 0.0;  // sum (x - E)
    double information = 0.0;
    double loglik = 0.0;
};

// Sums over the active observations in `ids`, with eta shifted by `shift`.
ScoreSums score_sums(const Model& m, const std::vector<int>& ids, double shift) {
    ScoreSums s;
    std::array<double, kMaxCategories> probs{};
    for (int id : ids) {
        if (!at(m.active, id)) continue;
        const Obs& o = at(m.obs, id);
        const auto st = m.steps_of(o);
        std::span<double> p(probs.data(), st.size() + 1);
        category_probabilities(m.eta(o) + shift, st, p);
        const auto mo = category_moments(p);
        s.residual += o.x - mo.expected;
        s.information += mo.variance;
        s.loglik += std::log(std::max(p[static_cast<std::size_t>(o.x)], 1e-300));
    }
    return s;
}

double local_loglik(const Model& m, const std::vector<int>& ids, double shift) {
    double ll = 0.0;
    for (int id : ids) {
        if (!at(m.active, id)) continue;
        const Obs& o = at(m.obs, id);
        ll += log_category_probability(m.eta(o) + shift, m.steps_of(o), o.x);
    }
    return ll;
}

// One capped, back-tracked Newton step for a parameter entering eta with
// `sign`. Returns the applied change.
double newton_location(const Model& m, const std::vector<int>& ids, int sign, double cap, double& param) {
    const ScoreSums s = score_sums(m, ids, 0.0);
    if (s.information <= 0.0) return 0.0;
    double delta = std::clamp(sign * s.residual / s.information, -cap, cap);
    for (int h = 0; h < kMaxHalvings; ++h) {
        if (local_loglik(m, ids, sign * delta) >= s.loglik - 1e-12) break;
        delta *= 0.5;
        if (h == kMaxHalvings - 1) delta = 0.0;
    }
    param += delta;
    return delta;
}

struct StepSums {
    std::vector<double> gradient;  // dLL / dtau_k
    Eigen::MatrixXd hessian;
    double loglik = 0.0;
};

StepSums step_sums(const Model& m, int item) {
    const auto& st = at(m.steps, item);
    const std::size_t n = st.size();
    StepSums s;
    s.gradient.assign(n, 0.0);
    s.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::array<double, kMaxCategories> probs{};
    std::array<double, kMaxCategories> tail{};
    for (int id : at(m.by_item, item)) {
        if (!at(m.active, id)) continue;
        const Obs& o = at(m.obs, id);
        std::span<double> p(probs.data(), n + 1);
        category_probabilities(m.eta(o), st, p);
        s.loglik += std::log(std::max(p[static_cast<std::size_t>(o.x)], 1e-300));
        // tail[k] = P(X >= k + 1)
        double acc = 0.0;
        for (std::size_t k = n; k-- > 0;) {
            acc += p[k + 1];
            tail[k] = acc;
        }
        for (std::size_t k = 0; k < n; ++k) {
            s.gradient[k] += tail[k] - (o.x >= static_cast<int>(k + 1) ? 1.0 : 0.0);
            for (std::size_t l = 0; l < n; ++l) {
                const double joint = tail[std::max(k, l)];
                s.hessian(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) -= joint - tail[k] * tail[l];
            }
        }
    }
    return s;
}

// Newton step on one item's thresholds constrained to keep their sum fixed.
double newton_steps(Model& m, int item, double cap) {
    auto& st = at(m.steps, item);
    const auto n = static_cast<Eigen::Index>(st.size());
    if (n < 2) return 0.0;
    const StepSums s = step_sums(m, item);

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
    kkt.topLeftCorner(n, n) = s.hessian;
    kkt.block(0, n, n, 1).setOnes();
    kkt.block(n, 0, 1, n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    for (Eigen::Index k = 0; k < n; ++k) rhs(k) = -s.gradient[static_cast<std::size_t>(k)];
    Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    Eigen::VectorXd dir = sol.head(n);
    if (!dir.allFinite()) return 0.0;
    const double largest = dir.cwiseAbs().maxCoeff();
    if (largest > cap) dir *= cap / largest;

    const std::vector<double> original = st;
    double scale = 1.0;
    for (int h = 0; h < kMaxHalvings; ++h) {
        for (Eigen::Index k = 0; k < n; ++k) st[static_cast<std::size_t>(k)] = original[static_cast<std::size_t>(k)] + scale * dir(k);
        if (local_loglik(m, at(m.by_item, item), 0.0) >= s.loglik - 1e-12) break;
        scale *= 0.5;
        if (h == kMaxHalvings - 1) st = original;
    }
    double change = 0.0;
    for (std::size_t k = 0; k < st.size(); ++k) change = std::max(change, std::abs(st[k] - original[k]));
    return change;
}

Model build_model(const std::vector<Response>& responses, const std::vector<ItemSpec>& items,
                  const EstimationConfig& config) {
    Model m;
    for (const auto& item : items) {
        validate_item(item);
        if (item.num_categories > kMaxCategories) throw InputError("item '" + item.id + "': too many categories");
        if (m.items.find(item.id)) throw InputError("duplicate item id '" + item.id + "'");
        m.items.intern(item.id);
        m.item_specs.push_back(item);
    }
    std::set<std::tuple<int, int, int>> seen;
    for (std::size_t line = 0; line < responses.size(); ++line) {
        const auto& r = responses[line];
        const auto item = m.items.find(r.item_id);
        if (!item) throw InputError("response " + std::to_string(line + 1) + ": unknown item '" + r.item_id + "'");
        if (r.rating < 0 || r.rating >= at(m.item_specs, *item).num_categories) {
            throw InputError("response " + std::to_string(line + 1) + ": rating " + std::to_string(r.rating) +
                             " out of range for item '" + r.item_id + "'");
        }
        const int c = m.comments.intern(r.comment_id);
        const int j = m.raters.intern(r.rater_id);
        if (!seen.emplace(c, j, *item).second) {
            throw InputError("duplicate response for (" + r.comment_id + ", " + r.rater_id + ", " + r.item_id + ")");
        }
        m.obs.push_back(Obs{c, j, *item, r.rating});
    }
    if (m.obs.empty()) throw InputError("estimate: no responses");

    const auto nc = static_cast<std::size_t>(m.comments.size());
    const auto nr = static_cast<std::size_t>(m.raters.size());
    const auto ni = static_cast<std::size_t>(m.items.size());
    m.active.assign(m.obs.size(), 1);
    m.by_comment.resize(nc);
    m.by_rater.resize(nr);
    m.by_item.resize(ni);
    for (std::size_t k = 0; k < m.obs.size(); ++k) {
        const Obs& o = m.obs[k];
        at(m.by_comment, o.comment).push_back(static_cast<int>(k));
        at(m.by_rater, o.rater).push_back(static_cast<int>(k));
        at(m.by_item, o.item).push_back(static_cast<int>(k));
    }
    m.theta.assign(nc, 0.0);
    m.severity.assign(nr, 0.0);
    m.difficulty.assign(ni, 0.0);
    m.steps.resize(ni);
    m.comment_extreme.assign(nc, 0);
    m.rater_extreme.assign(nr, 0);
    m.item_extreme.assign(ni, 0);
    m.rater_anchored.assign(nr, 0);
    m.item_anchored.assign(ni, 0);
    m.steps_anchored.assign(ni, 0);

    for (std::size_t i = 0; i < ni; ++i) {
        m.steps[i].assign(static_cast<std::size_t>(m.item_specs[i].num_categories - 1), 0.0);
    }
    for (const auto& [id, value] : config.anchored_items) {
        const auto i = m.items.find(id);
        if (!i) throw InputError("anchored item '" + id + "' not in the item list");
        if (!std::isfinite(value)) throw InputError("anchored item '" + id + "': non-finite value");
        at(m.difficulty, *i) = value;
        at(m.item_anchored, *i) = 1;
    }
    for (const auto& [id, values] : config.anchored_steps) {
        const auto i = m.items.find(id);
        if (!i) throw InputError("anchored steps for unknown item '" + id + "'");
        if (values.size() != at(m.steps, *i).size()) {
            throw InputError("anchored steps for item '" + id + "': wrong count");
        }
        at(m.steps, *i) = values;
        at(m.steps_anchored, *i) = 1;
    }
    for (const auto& [id, value] : config.anchored_raters) {
        // Raters absent from the data are allowed; they simply never enter.
        if (const auto j = m.raters.find(id)) {
            if (!std::isfinite(value)) throw InputError("anchored rater '" + id + "': non-finite value");
            at(m.severity, *j) = value;
            at(m.rater_anchored, *j) = 1;
        }
    }
    for (std::size_t i = 0; i < ni; ++i) {
        if (m.by_item[i].empty() && !m.item_anchored[i]) {
            throw InputError("item '" + m.items.name(static_cast<int>(i)) + "' has no observations");
        }
    }
    return m;
}

// Flags elements whose raw score sits at its minimum or maximum, removing
// their observations until no new extremes appear.
void flag_extremes(Model& m) {
    auto check = [&](std::vector<std::vector<int>>& lists, std::vector<char>& flags, const std::vector<char>* anchored) {
        bool changed = false;
        for (std::size_t e = 0; e < lists.size(); ++e) {
            if (flags[e] || (anchored && (*anchored)[e])) continue;
            int raw = 0, top = 0, count = 0;
            for (int id : lists[e]) {
                if (!at(m.active, id)) continue;
                const Obs& o = at(m.obs, id);
                raw += o.x;
                top += at(m.item_specs, o.item).num_categories - 1;
                ++count;
            }
            if (count == 0 || raw == 0 || raw == top) {
                flags[e] = 1;
                for (int id : lists[e]) at(m.active, id) = 0;
                changed = true;
            }
        }
        return changed;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        changed |= check(m.by_comment, m.comment_extreme, nullptr);
        changed |= check(m.by_rater, m.rater_extreme, &m.rater_anchored);
        changed |= check(m.by_item, m.item_extreme, &m.item_anchored);
    }
}

void check_categories(const Model& m) {
    for (int i = 0; i < m.items.size(); ++i) {
        if (at(m.steps_anchored, i) || at(m.item_extreme, i)) continue;
        std::vector<int> counts(static_cast<std::size_t>(at(m.item_specs, i).num_categories), 0);
        for (int id : at(m.by_item, i)) {
            if (at(m.active, id)) ++counts[static_cast<std::size_t>(at(m.obs, id).x)];
        }
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (counts[k] == 0) {
                throw InputError("item '" + m.items.name(i) + "': category " + std::to_string(k) +
                                 " is never observed; collapse it or anchor the steps");
            }
        }
    }
}

void check_connectivity(const Model& m) {
    const bool raters_free = std::any_of(m.rater_anchored.begin(), m.rater_anchored.end(), [](char a) { return !a; });
    const bool items_free = std::any_of(m.item_anchored.begin(), m.item_anchored.end(), [](char a) { return !a; });
    auto check = [&](bool use_raters, const char* label) {
        LinkageGraph g;
        for (std::size_t k = 0; k < m.obs.size(); ++k) {
            if (!m.active[k]) continue;
            const Obs& o = m.obs[k];
            const int a = g.add_node(use_raters ? m.raters.name(o.rater) : m.items.name(o.item), true);
            const int b = g.add_node(m.comments.name(o.comment), false);
            g.add_edge(a, b);
        }
        if (g.node_count() == 0) return;
        const auto labels = component_labels(g);
        const int components = *std::max_element(labels.begin(), labels.end()) + 1;
        if (components > 1) {
            throw DisconnectedError(std::string("estimate: comment-") + label + " network has " +
                                        std::to_string(components) + " disjoint subsets",
                                    describe_components(g, labels));
        }
    };
    if (raters_free) check(true, "rater");
    if (items_free) check(false, "item");
}

std::vector<LocationTerm> terms_for(const Model& m, const std::vector<int>& ids, int exclude) {
    // exclude: 0 = comment, 1 = rater, 2 = item; that facet's value is the location.
    std::vector<LocationTerm> terms;
    for (int id : ids) {
        const Obs& o = at(m.obs, id);
        const double th = at(m.theta, o.comment);
        const double sv = at(m.severity, o.rater);
        const double df = at(m.difficulty, o.item);
        double offset = 0.0;
        if (exclude == 0) offset = -df - sv;
        if (exclude == 1) offset = th - df;
        if (exclude == 2) offset = th - sv;
        if (!std::isfinite(offset)) continue;
        terms.push_back(LocationTerm{offset, m.steps_of(o), o.x});
    }
    return terms;
}

void centre(Model& m, bool include_extremes) {
    auto centre_facet = [&](std::vector<double>& values, const std::vector<char>& anchored,
                            const std::vector<char>& extreme) {
        if (std::any_of(anchored.begin(), anchored.end(), [](char a) { return a != 0; })) return;
        double sum = 0.0;
        int n = 0;
        for (std::size_t e = 0; e < values.size(); ++e) {
            if (extreme[e] && !include_extremes) continue;
            sum += values[e];
            ++n;
        }
        if (n == 0) return;
        const double mean = sum / n;
        for (std::size_t e = 0; e < values.size(); ++e) {
            if (extreme[e] && !include_extremes) continue;
            values[e] -= mean;
        }
        for (double& t : m.theta) t -= mean;
    };
    centre_facet(m.difficulty, m.item_anchored, m.item_extreme);
    centre_facet(m.severity, m.rater_anchored, m.rater_extreme);
}

struct SweepStats {
    double loglik = 0.0;
    double max_residual = 0.0;
};

SweepStats sweep_stats(const Model& m) {
    SweepStats s;
    std::vector<double> rc(m.theta.size(), 0.0), rr(m.severity.size(), 0.0), ri(m.difficulty.size(), 0.0);
    std::vector<std::vector<double>> rs(m.steps.size());
    for (std::size_t i = 0; i < m.steps.size(); ++i) rs[i].assign(m.steps[i].size(), 0.0);
    std::array<double, kMaxCategories> probs{};
    for (std::size_t k = 0; k < m.obs.size(); ++k) {
        if (!m.active[k]) continue;
        const Obs& o = m.obs[k];
        const auto st = m.steps_of(o);
        std::span<double> p(probs.data(), st.size() + 1);
        category_probabilities(m.eta(o), st, p);
        s.loglik += std::log(std::max(p[static_cast<std::size_t>(o.x)], 1e-300));
        const double res = o.x - category_moments(p).expected;
        at(rc, o.comment) += res;
        at(rr, o.rater) += res;
        at(ri, o.item) += res;
        auto& g = at(rs, o.item);
        double tail = 0.0;
        for (std::size_t c = st.size(); c-- > 0;) {
            tail += p[c + 1];
            g[c] += (o.x >= static_cast<int>(c + 1) ? 1.0 : 0.0) - tail;
        }
    }
    auto fold = [&](const std::vector<double>& r, const std::vector<char>& extreme, const std::vector<char>* anchored) {
        for (std::size_t e = 0; e < r.size(); ++e) {
            if (extreme[e] || (anchored && (*anchored)[e])) continue;
            s.max_residual = std::max(s.max_residual, std::abs(r[e]));
        }
    };
    fold(rc, m.comment_extreme, nullptr);
    fold(rr, m.rater_extreme, &m.rater_anchored);
    fold(ri, m.item_extreme, &m.item_anchored);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (m.steps_anchored[i] || m.item_extreme[i] || rs[i].size() < 2) continue;
        // Thresholds move under a sum constraint, so only the centred gradient must vanish.
        const double mean = std::accumulate(rs[i].begin(), rs[i].end(), 0.0) / static_cast<double>(rs[i].size());
        for (double g : rs[i]) s.max_residual = std::max(s.max_residual, std::abs(g - mean));
    }
    return s;
}

}  // namespace

EstimationResult estimate(const std::vector<Response>& responses, const std::vector<ItemSpec>& items,
                          const EstimationConfig& config) {
    if (config.max_iterations < 1 || !(config.convergence_tol > 0.0) || !(config.newton_step_cap > 0.0) ||
        !(config.score_residual_tol > 0.0)) {
        throw ConfigError("estimate: iterations and tolerances must be positive");
    }
    Model m = build_model(responses, items, config);
    flag_extremes(m);
    check_categories(m);
    check_connectivity(m);

    // Starting abilities from the raw-score logit.
    for (int c = 0; c < m.comments.size(); ++c) {
        if (at(m.comment_extreme, c)) continue;
        double raw = 0.0, top = 0.0;
        for (int id : at(m.by_comment, c)) {
            if (!at(m.active, id)) continue;
            raw += at(m.obs, id).x;
            top += at(m.item_specs, at(m.obs, id).item).num_categories - 1;
        }
        at(m.theta, c) = std::log((raw + 0.5) / (top - raw + 0.5));
    }

    const double cap = config.newton_step_cap;
    const double residual_tol = std::min(config.score_residual_tol, 10.0 * config.convergence_tol);
    EstimationResult result;
    bool converged = false;
    SweepStats stats;
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        const auto old_theta = m.theta;
        const auto old_severity = m.severity;
        const auto old_difficulty = m.difficulty;
        const auto old_steps = m.steps;

        for (int c = 0; c < m.comments.size(); ++c) {
            if (!at(m.comment_extreme, c)) newton_location(m, at(m.by_comment, c), +1, cap, at(m.theta, c));
        }
        for (int i = 0; i < m.items.size(); ++i) {
            if (!at(m.item_anchored, i) && !at(m.item_extreme, i)) {
                newton_location(m, at(m.by_item, i), -1, cap, at(m.difficulty, i));
            }
        }
        for (int i = 0; i < m.items.size(); ++i) {
            if (!at(m.steps_anchored, i) && !at(m.item_extreme, i)) newton_steps(m, i, cap);
        }
        for (int j = 0; j < m.raters.size(); ++j) {
            if (!at(m.rater_anchored, j) && !at(m.rater_extreme, j)) {
                newton_location(m, at(m.by_rater, j), -1, cap, at(m.severity, j));
            }
        }
        centre(m, false);

        double change = 0.0;
        auto track = [&change](const std::vector<double>& now, const std::vector<double>& before,
                               const std::vector<char>& skip) {
            for (std::size_t e = 0; e < now.size(); ++e) {
                if (!skip[e]) change = std::max(change, std::abs(now[e] - before[e]));
            }
        };
        track(m.theta, old_theta, m.comment_extreme);
        track(m.severity, old_severity, m.rater_extreme);
        track(m.difficulty, old_difficulty, m.item_extreme);
        for (std::size_t i = 0; i < m.steps.size(); ++i) {
            for (std::size_t k = 0; k < m.steps[i].size(); ++k) {
                change = std::max(change, std::abs(m.steps[i][k] - old_steps[i][k]));
            }
        }

        stats = sweep_stats(m);
        result.history.push_back(stats.loglik);
        result.iterations_used = iter;
        result.max_residual_change = change;
        result.max_score_residual = stats.max_residual;
        if (change < config.convergence_tol && stats.max_residual < residual_tol) {
            converged = true;
            break;
        }
    }

    // Extreme elements, measured from all their observations with the others fixed.
    for (int i = 0; i < m.items.size(); ++i) {
        if (!at(m.item_extreme, i)) continue;
        std::vector<int> ids;
        for (int id : at(m.by_item, i)) {
            const Obs& o = at(m.obs, id);
            if (!at(m.comment_extreme, o.comment) && !at(m.rater_extreme, o.rater)) ids.push_back(id);
        }
        if (ids.empty()) ids = at(m.by_item, i);
        const auto terms = terms_for(m, ids, 2);
        const auto est = solve_location(terms, AbilityMethod::WLE);
        at(m.difficulty, i) = -est.value;
        result.extreme_items.push_back(m.items.name(i));
    }
    for (int j = 0; j < m.raters.size(); ++j) {
        if (!at(m.rater_extreme, j)) continue;
        std::vector<int> ids;
        for (int id : at(m.by_rater, j)) {
            if (!at(m.comment_extreme, at(m.obs, id).comment)) ids.push_back(id);
        }
        if (ids.empty()) ids = at(m.by_rater, j);
        const auto terms = terms_for(m, ids, 1);
        at(m.severity, j) = -solve_location(terms, AbilityMethod::WLE).value;
        result.extreme_raters.push_back(m.raters.name(j));
    }
    std::vector<double> comment_se(m.theta.size(), kNaN);
    for (int c = 0; c < m.comments.size(); ++c) {
        if (!at(m.comment_extreme, c)) continue;
        const auto terms = terms_for(m, at(m.by_comment, c), 0);
        const auto est = solve_location(terms, config.ability_estimator);
        at(m.theta, c) = est.value;
        at(comment_se, c) = est.se;
        result.extreme_comments.push_back(m.comments.name(c));
    }
    centre(m, true);

    FacetParameters& out = result.parameters;
    out.converged = converged;
    out.log_likelihood = sweep_stats(m).loglik;

    std::array<double, kMaxCategories> probs{};
    for (int i = 0; i < m.items.size(); ++i) {
        ItemSpec spec = at(m.item_specs, i);
        spec.difficulty = at(m.difficulty, i);
        spec.steps = at(m.steps, i);
        double info = 0.0;
        std::vector<double> step_info(spec.steps.size(), 0.0);
        for (int id : at(m.by_item, i)) {
            if (!at(m.active, id)) continue;
            const Obs& o = at(m.obs, id);
            std::span<double> p(probs.data(), spec.steps.size() + 1);
            category_probabilities(m.eta(o), spec.steps, p);
            info += category_moments(p).variance;
            double tail = 0.0;
            for (std::size_t k = spec.steps.size(); k-- > 0;) {
                tail += p[k + 1];
                step_info[k] += tail * (1.0 - tail);
            }
        }
        spec.difficulty_se = info > 0.0 ? 1.0 / std::sqrt(info) : kNaN;
        spec.step_se.clear();
        for (double v : step_info) spec.step_se.push_back(v > 0.0 ? 1.0 / std::sqrt(v) : kNaN);
        out.items.push_back(std::move(spec));
    }
    for (int j = 0; j < m.raters.size(); ++j) {
        const ScoreSums s = score_sums(m, at(m.by_rater, j), 0.0);
        out.raters.push_back(RaterSpec{m.raters.name(j), at(m.severity, j),
                                       s.information > 0.0 ? 1.0 / std::sqrt(s.information) : kNaN});
    }
    std::vector<double> weights(m.theta.size(), 1.0);
    std::vector<char> weight_seen(m.theta.size(), 0);
    for (std::size_t k = 0; k < responses.size(); ++k) {
        const int c = m.obs[k].comment;
        if (!at(weight_seen, c) && responses[k].weight) {
            at(weights, c) = *responses[k].weight;
            at(weight_seen, c) = 1;
        }
    }
    for (int c = 0; c < m.comments.size(); ++c) {
        double se = at(comment_se, c);
        if (!at(m.comment_extreme, c)) {
            const ScoreSums s = score_sums(m, at(m.by_comment, c), 0.0);
            se = s.information > 0.0 ? 1.0 / std::sqrt(s.information) : kNaN;
        }
        out.comments.push_back(CommentSpec{m.comments.name(c), at(m.theta, c), se, at(weights, c)});
    }
    return result;
}

LocationEstimate solve_location(std::span<const LocationTerm> terms, AbilityMethod method) {
    if (terms.empty()) throw MissingDataError("solve_location: no observations");
    int raw = 0, top = 0;
    for (const auto& t : terms) {
        raw += t.rating;
        top += static_cast<int>(t.steps.size());
    }
    LocationEstimate out;
    out.extreme = raw == 0 || raw == top;
    if (out.extreme && method == AbilityMethod::MLE) {
        out.value = raw == 0 ? -kInf : kInf;
        out.se = kInf;
        return out;
    }

    struct Eval {
        double f, slope, info, adjusted_info;
    };
    std::array<double, kMaxCategories> probs{};
    auto evaluate = [&](double t) {
        double s = 0.0, info = 0.0, j = 0.0, jprime = 0.0;
        for (const auto& term : terms) {
            std::span<double> p(probs.data(), term.steps.size() + 1);
            category_probabilities(t + term.offset, term.steps, p);
            const auto mo = category_moments(p);
            s += term.rating - mo.expected;
            info += mo.variance;
            j += mo.third;
            jprime += mo.fourth - 3.0 * mo.variance * mo.variance;
        }
        Eval e{s, -info, info, info};
        if (method == AbilityMethod::WLE && info > 0.0) {
            e.f = s + j / (2.0 * info);
            e.slope = -info + (jprime * info - j * j) / (2.0 * info * info);
            e.adjusted_info = -e.slope;
        }
        return e;
    };

    // Bracket the root; f decreases through it.
    double lo = -1.0, hi = 1.0;
    for (int k = 0; k < 60 && evaluate(lo).f <= 0.0; ++k) lo = lo * 2.0 - 1.0;
    for (int k = 0; k < 60 && evaluate(hi).f >= 0.0; ++k) hi = hi * 2.0 + 1.0;
    double t = 0.5 * (lo + hi);
    for (int k = 0; k < 200; ++k) {
        const Eval e = evaluate(t);
        if (e.f > 0.0) lo = t; else hi = t;
        if (e.f == 0.0 || hi - lo < 1e-13) break;
        double next = e.slope < 0.0 ? t - e.f / e.slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) < 1e-13) {
            t = next;
            break;
        }
        t = next;
    }
    const Eval e = evaluate(t);
    const double info = e.adjusted_info > 0.0 ? e.adjusted_info : e.info;
    out.value = t;
    out.se = info > 0.0 ? 1.0 / std::sqrt(info) : kInf;
    return out;
}

std::vector<CommentSpec> estimate_abilities_anchored(const std::vector<Response>& responses,
                                                     const std::vector<ItemSpec>& anchored_items,
                                                     const std::vector<RaterSpec>& anchored_raters,
                                                     AbilityMethod method,
                                                     const std::vector<std::string>& comment_ids) {
    std::unordered_map<std::string, const ItemSpec*> items;
    std::unordered_map<std::string, double> raters;
    for (const auto& item : anchored_items) {
        validate_item(item);
        items.emplace(item.id, &item);
    }
    for (const auto& r : anchored_raters) raters.emplace(r.id, r.severity);

    IdIndex order(comment_ids);
    const bool fixed_order = !comment_ids.empty();
    std::vector<std::vector<LocationTerm>> terms(comment_ids.size());
    std::vector<double> weights(comment_ids.size(), 1.0);
    for (const auto& r : responses) {
        auto item = items.find(r.item_id);
        if (item == items.end()) throw InputError("no anchor for item '" + r.item_id + "'");
        auto rater = raters.find(r.rater_id);
        if (rater == raters.end()) throw InputError("no anchor for rater '" + r.rater_id + "'");
        if (r.rating < 0 || r.rating >= item->second->num_categories) {
            throw InputError("rating out of range for item '" + r.item_id + "'");
        }
        int c;
        if (fixed_order) {
            const auto found = order.find(r.comment_id);
            if (!found) continue;
            c = *found;
        } else {
            c = order.intern(r.comment_id);
            if (static_cast<std::size_t>(c) == terms.size()) {
                terms.emplace_back();
                weights.push_back(1.0);
            }
        }
        if (r.weight) at(weights, c) = *r.weight;
        at(terms, c).push_back(
            LocationTerm{-item->second->difficulty - rater->second, item->second->steps, r.rating});
    }
    std::vector<CommentSpec> out;
    out.reserve(terms.size());
    for (int c = 0; c < order.size(); ++c) {
        if (at(terms, c).empty()) throw MissingDataError("comment '" + order.name(c) + "' has no responses");
        const auto est = solve_location(at(terms, c), method);
        out.push_back(CommentSpec{order.name(c), est.value, est.se, at(weights, c)});
    }
    return out;
}

double separation_reliability(std::span<const std::pair<double, double>> estimates, std::string* warning) {
    double sum = 0.0, sum_sq_se = 0.0;
    int n = 0;
    for (const auto& [value, se] : estimates) {
        if (!std::isfinite(value) || !std::isfinite(se)) continue;
        sum += value;
        sum_sq_se += se * se;
        ++n;
    }
    if (n < 2) throw InputError("separation_reliability: needs at least 2 finite estimates");
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& [value, se] : estimates) {
        if (!std::isfinite(value) || !std::isfinite(se)) continue;
        ss += (value - mean) * (value - mean);
    }
    const double observed = ss / n;
    if (observed <= 0.0) {
        if (warning) *warning = "zero observed variance; reliability reported as 0";
        return 0.0;
    }
    return std::max(0.0, (observed - sum_sq_se / n) / observed);
}

double log_likelihood(const std::vector<Response>& responses, const FacetParameters& params) {
    std::unordered_map<std::string, const ItemSpec*> items;
    std::unordered_map<std::string, double> raters, comments;
    for (const auto& i : params.items) items.emplace(i.id, &i);
    for (const auto& r : params.raters) raters.emplace(r.id, r.severity);
    for (const auto& c : params.comments) comments.emplace(c.id, c.ability);
    double ll = 0.0;
    for (const auto& r : responses) {
        auto item = items.find(r.item_id);
        auto rater = raters.find(r.rater_id);
        auto comment = comments.find(r.comment_id);
        if (item == items.end() || rater == raters.end() || comment == comments.end()) {
            throw InputError("log_likelihood: unknown id in response");
        }
        ll += log_category_probability(comment->second - item->second->difficulty - rater->second,
                                       item->second->steps, r.rating);
    }
    return ll;
}

}  // namespace facet
