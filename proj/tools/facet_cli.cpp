// facet: command-line front end for the measurement pipeline.
//
//   simulate -> plan -> serve -> estimate -> diagnose -> filter-raters -> score
//
// Exit status: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "facet/batch_service.hpp"
#include "facet/error.hpp"
#include "facet/estimator.hpp"
#include "facet/fit.hpp"
#include "facet/io.hpp"
#include "facet/judging_plan.hpp"
#include "facet/linkage.hpp"
#include "facet/model.hpp"
#include "facet/multitask.hpp"
#include "facet/rater_filter.hpp"
#include "facet/scorer.hpp"

using namespace facet;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::string out = "-";
    std::string format = "csv";
};

void emit(const Globals& g, const std::string& content) {
    if (g.out.empty() || g.out == "-") {
        std::fwrite(content.data(), 1, content.size(), stdout);
        std::fflush(stdout);
    } else {
        write_file_atomic(g.out, content);
    }
}

ojson num(double v) {
    if (std::isfinite(v)) return v;
    return format_decimal(v);
}

char id_buffer[64];
std::string make_id(const char* prefix, std::size_t i, int width) {
    std::snprintf(id_buffer, sizeof id_buffer, "%s%0*zu", prefix, width, i);
    return id_buffer;
}

std::vector<ItemSpec> load_items(const std::string& path) { return items_from_json(read_file(path)); }

std::vector<std::string> item_ids(const std::vector<ItemSpec>& items) {
    std::vector<std::string> ids;
    for (const auto& i : items) ids.push_back(i.id);
    return ids;
}

AbilityMethod parse_method(const std::string& s) {
    if (s == "wle") return AbilityMethod::WLE;
    if (s == "mle") return AbilityMethod::MLE;
    throw ConfigError("ability method must be 'wle' or 'mle'");
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
    std::string items;
    int comments = 200;
    int raters = 50;
    int ratings_per_comment = 4;
    int group_size = 4;
    int originals_per_batch = 20;
    double ability_sd = 1.0;
    double severity_sd = 0.5;
    double identity_rate = 0.8;
    std::string truth;
    std::string plan_out;
};

void run_simulate(const Globals& g, const SimulateOpts& o) {
    auto items = load_items(o.items);
    if (o.comments < 1 || o.raters < 1) throw ConfigError("simulate: --comments and --raters must be positive");
    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    FacetParameters truth;
    truth.items = items;
    for (auto& item : truth.items) item.collapse_map.reset();
    std::vector<std::string> comment_ids;
    for (int c = 0; c < o.comments; ++c) {
        comment_ids.push_back(make_id("c", static_cast<std::size_t>(c + 1), 5));
        truth.comments.push_back(CommentSpec{comment_ids.back(), o.ability_sd * normal(rng), kNaN, 1.0});
    }
    std::vector<std::string> rater_ids;
    double mean = 0.0;
    for (int r = 0; r < o.raters; ++r) {
        rater_ids.push_back(make_id("r", static_cast<std::size_t>(r + 1), 4));
        truth.raters.push_back(RaterSpec{rater_ids.back(), o.severity_sd * normal(rng), kNaN});
        mean += truth.raters.back().severity;
    }
    mean /= o.raters;
    for (auto& r : truth.raters) r.severity -= mean;

    PlanConfig pc;
    pc.ratings_per_comment = o.ratings_per_comment;
    pc.group_size = o.group_size;
    pc.originals_per_batch = o.originals_per_batch;
    pc.reference_per_batch = 0;
    pc.seed = g.seed;
    const JudgingPlan plan = build_plan(pc, comment_ids);
    const RaterAssignment who = assign_batches_to_raters(plan, rater_ids, g.seed + 1);
    const auto assignment = expand_assignment(plan, who, item_ids(items));
    auto responses = simulate_responses(truth, assignment, g.seed + 2);

    // Collapsed items: report the lowest raw category of each analysis category.
    std::unordered_map<std::string, std::vector<int>> raw_of;
    for (const auto& item : items) {
        if (!item.collapse_map) continue;
        std::vector<int> first(static_cast<std::size_t>(item.num_categories), -1);
        for (std::size_t raw = 0; raw < item.collapse_map->size(); ++raw) {
            auto& slot = first[static_cast<std::size_t>((*item.collapse_map)[raw])];
            if (slot < 0) slot = static_cast<int>(raw);
        }
        raw_of[item.id] = first;
    }
    std::bernoulli_distribution identity(o.identity_rate);
    std::map<std::pair<std::string, std::string>, bool> flag;
    for (auto& r : responses) {
        if (auto it = raw_of.find(r.item_id); it != raw_of.end()) r.rating = it->second[static_cast<std::size_t>(r.rating)];
        auto key = std::make_pair(r.comment_id, r.rater_id);
        auto f = flag.find(key);
        if (f == flag.end()) f = flag.emplace(key, identity(rng)).first;
        r.any_identity = f->second;
    }
    if (!o.truth.empty()) write_file_atomic(o.truth, parameters_to_json(truth));
    if (!o.plan_out.empty()) write_file_atomic(o.plan_out, plan_to_json(plan));
    emit(g, responses_to_csv(responses));
}

// ---------------------------------------------------------------- plan

struct PlanOpts {
    std::string comments;
    int count = 0;
    std::string references;
    std::string strata;
    int ratings_per_comment = 4;
    int group_size = 4;
    int originals_per_batch = 20;
    int reference_per_batch = 6;
    std::string report;
};

std::vector<std::string> read_lines(const std::string& path) {
    std::vector<std::string> out;
    for (const auto& row : parse_csv(read_file(path))) {
        if (!row.empty() && !row[0].empty()) out.push_back(row[0]);
    }
    return out;
}

ojson linkage_json(const LinkageReport& r) {
    auto dist = [](const DistanceStats& d) {
        return ojson{{"diameter", d.diameter}, {"average_distance", num(d.average_distance)}, {"exact", d.exact}};
    };
    return ojson{{"nodes", r.nodes},
                 {"edges", r.edges},
                 {"rater_nodes", r.rater_nodes},
                 {"comment_nodes", r.comment_nodes},
                 {"connected_components", r.connected_components},
                 {"component_sizes", r.component_sizes},
                 {"bipartite", dist(r.bipartite)},
                 {"projection", dist(r.projection)}};
}

void run_plan(const Globals& g, const PlanOpts& o) {
    std::vector<std::string> originals;
    if (!o.comments.empty()) {
        originals = read_lines(o.comments);
    } else if (o.count > 0) {
        for (int i = 0; i < o.count; ++i) originals.push_back(make_id("c", static_cast<std::size_t>(i + 1), 5));
    } else {
        throw ConfigError("plan: give --comments FILE or --count N");
    }
    PlanConfig pc;
    pc.ratings_per_comment = o.ratings_per_comment;
    pc.group_size = o.group_size;
    pc.originals_per_batch = o.originals_per_batch;
    pc.reference_per_batch = o.references.empty() ? 0 : o.reference_per_batch;
    pc.seed = g.seed;
    if (!o.references.empty()) {
        // tag,comment_id rows
        std::map<std::string, std::size_t> level_of;
        for (const auto& row : parse_csv(read_file(o.references))) {
            if (row.size() < 2 || row[0] == "tag") continue;
            auto [it, fresh] = level_of.emplace(row[0], pc.reference_levels.size());
            if (fresh) pc.reference_levels.push_back(ReferenceLevel{row[0], {}});
            pc.reference_levels[it->second].comments.push_back(row[1]);
        }
    }
    if (!o.strata.empty()) {
        for (const auto& row : parse_csv(read_file(o.strata))) {
            if (row.size() >= 2 && row[0] != "comment_id") pc.strata[row[0]] = row[1];
        }
    }
    const JudgingPlan plan = build_plan(pc, originals);
    if (!o.report.empty()) write_file_atomic(o.report, linkage_json(linkage_analysis(plan, g.seed)).dump(2) + "\n");
    emit(g, plan_to_json(plan));
}

// ---------------------------------------------------------------- serve

struct ServeOpts {
    std::string plan;
    std::string listen;
    std::string store;
    double lease_hours = 0.0;
    std::string items;
};

BatchServer* active_server = nullptr;

void run_serve(const Globals& g, const ServeOpts& o, bool seeded) {
    ServiceConfig config;
    apply_environment(config);
    if (!o.listen.empty()) config.listen_address = o.listen;
    if (!o.store.empty()) config.store_path = o.store;
    if (o.lease_hours != 0.0) config.lease_hours = o.lease_hours;
    if (seeded) config.seed = g.seed;
    if (!o.items.empty()) config.items = load_items(o.items);
    std::vector<Batch> batches;
    if (!o.plan.empty()) batches = plan_from_json(read_file(o.plan)).batches;
    const auto [host, port] = parse_listen_address(config.listen_address);
    BatchService service(std::move(batches), config);
    BatchServer server(service);
    active_server = &server;
    std::signal(SIGINT, [](int) { if (active_server) active_server->stop(); });
    std::signal(SIGTERM, [](int) { if (active_server) active_server->stop(); });
    std::fprintf(stderr, "serving %zu batches on %s (lease %.3g h)\n", service.states().size(),
                 config.listen_address.c_str(), config.lease_hours);
    if (!server.listen(host, port)) throw Error("cannot listen on " + config.listen_address);
    active_server = nullptr;
}

// ---------------------------------------------------------------- estimate

struct EstimateOpts {
    std::string responses;
    std::string items;
    std::string anchors;
    int max_iterations = 200;
    double tol = 1e-4;
    std::string ability = "wle";
};

EstimationConfig estimation_config(const EstimateOpts& o) {
    EstimationConfig c;
    c.max_iterations = o.max_iterations;
    c.convergence_tol = o.tol;
    c.ability_estimator = parse_method(o.ability);
    if (!o.anchors.empty()) {
        const auto anchors = parameters_from_json(read_file(o.anchors));
        for (const auto& i : anchors.items) {
            c.anchored_items[i.id] = i.difficulty;
            c.anchored_steps[i.id] = i.steps;
        }
        for (const auto& r : anchors.raters) c.anchored_raters[r.id] = r.severity;
    }
    return c;
}

void run_estimate(const Globals& g, const EstimateOpts& o) {
    const auto items = load_items(o.items);
    const auto responses = responses_from_csv(read_file(o.responses));
    const auto collapsed = collapse_ratings(responses, items);
    const auto result = estimate(collapsed.responses, collapsed.items, estimation_config(o));
    FacetParameters params = result.parameters;
    // Keep the instrument's collapse maps alongside the calibrated steps.
    for (auto& item : params.items) {
        for (const auto& original : items) {
            if (original.id == item.id && original.collapse_map) item.collapse_map = original.collapse_map;
        }
    }
    if (!result.parameters.converged) {
        std::fprintf(stderr, "warning: no convergence after %d iterations (max change %.3g)\n", result.iterations_used,
                     result.max_residual_change);
    }
    emit(g, parameters_to_json(params));
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseOpts {
    std::string responses;
    std::string params;
    std::string binary_item;
    std::string wright;
    int min_pairs = 30;
};

ojson fit_json(const std::vector<ElementFit>& fits) {
    ojson a = ojson::array();
    for (const auto& f : fits) {
        a.push_back({{"id", f.id},
                     {"measure", num(f.measure)},
                     {"count", f.observation_count},
                     {"infit", num(f.infit_mnsq)},
                     {"outfit", num(f.outfit_mnsq)},
                     {"discrimination", num(f.discrimination)},
                     {"point_measure", num(f.point_measure_corr)}});
    }
    return a;
}

std::string fit_csv(const FitReport& fit) {
    std::string out = "facet,id,measure,count,infit,outfit,discrimination,point_measure\n";
    for (const auto* group : {&fit.items, &fit.raters, &fit.comments}) {
        for (const auto& f : *group) {
            out += f.facet + "," + csv_field(f.id) + "," + format_decimal(f.measure) + "," +
                   std::to_string(f.observation_count) + "," + format_decimal(f.infit_mnsq) + "," +
                   format_decimal(f.outfit_mnsq) + "," + format_decimal(f.discrimination) + "," +
                   format_decimal(f.point_measure_corr) + "\n";
        }
    }
    return out;
}

void run_diagnose(const Globals& g, const DiagnoseOpts& o) {
    const auto params = parameters_from_json(read_file(o.params));
    const auto raw = responses_from_csv(read_file(o.responses));
    const auto collapsed = collapse_ratings(raw, params.items);
    FacetParameters analysis = params;
    analysis.items = collapsed.items;
    const auto& responses = collapsed.responses;
    const FitReport fit = fit_statistics(responses, analysis);
    if (!o.wright.empty()) {
        std::string csv = "facet,element,measure,se\n";
        for (const auto& row : wright_map_export(analysis)) {
            csv += row.facet + "," + csv_field(row.element) + "," + format_decimal(row.measure) + "," + format_decimal(row.se) + "\n";
        }
        write_file_atomic(o.wright, csv);
    }
    if (g.format == "csv") {
        emit(g, fit_csv(fit));
        return;
    }
    ojson j;
    j["observations"] = fit.observations;
    j["reliability"] = {{"comments", num(fit.comment_reliability)},
                        {"raters", num(fit.rater_reliability)},
                        {"items", num(fit.item_reliability)}};
    j["items"] = fit_json(fit.items);
    j["raters"] = fit_json(fit.raters);
    j["comments"] = fit_json(fit.comments);
    ojson mono = ojson::array();
    for (const auto& m : category_monotonicity(responses, analysis)) {
        ojson cats = ojson::array();
        for (const auto& c : m.categories) {
            cats.push_back({{"category", c.category}, {"count", c.count}, {"mean_ability", num(c.mean_ability)}, {"ok", c.ok}});
        }
        mono.push_back({{"item", m.item_id}, {"ok", m.ok}, {"degenerate", m.degenerate}, {"categories", cats}});
    }
    j["monotonicity"] = mono;
    const auto corr = item_correlations(responses, o.min_pairs);
    ojson values = ojson::array();
    for (const auto& row : corr.values) {
        ojson r = ojson::array();
        for (double v : row) r.push_back(num(v));
        values.push_back(r);
    }
    j["correlations"] = {{"items", corr.item_ids}, {"values", values}, {"methods", corr.methods}};
    j["linkage"] = linkage_json(linkage_analysis(responses, g.seed));
    if (!o.binary_item.empty()) {
        const auto cmp = binary_item_comparison(responses, params.comments, analysis.items, o.binary_item);
        j["binary_comparison"] = {{"item", o.binary_item},
                                  {"pearson", num(cmp.pearson_correlation)},
                                  {"r_squared", num(cmp.r_squared)},
                                  {"comments", cmp.comment_ids.size()}};
        for (const auto& w : cmp.warnings) j["warnings"].push_back(w);
    }
    for (const auto& w : fit.warnings) j["warnings"].push_back(w);
    emit(g, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- filter-raters

struct FilterOpts {
    std::string responses;
    std::string items;
    double infit_max = 1.9;
    double infit_min = 0.37;
    double identity_min = 0.20;
    double severity_max = 0.0;
    double infit_quantile = 0.0;
    int rounds = 4;
    std::string kept;
    std::string params_out;
};

void run_filter(const Globals& g, const FilterOpts& o) {
    const auto items = load_items(o.items);
    const auto raw = responses_from_csv(read_file(o.responses));
    const auto collapsed = collapse_ratings(raw, items);
    FilterPolicy policy;
    policy.infit_max = o.infit_max;
    policy.infit_min = o.infit_min;
    policy.identity_rate_min = o.identity_min;
    policy.rounds = o.rounds;
    if (o.severity_max > 0.0) policy.severity_abs_max = o.severity_max;
    if (o.infit_quantile > 0.0) policy.infit_upper_quantile = o.infit_quantile;
    const auto result = filter_and_refit(collapsed.responses, collapsed.items, policy);

    ojson audit = ojson::array();
    for (const auto& round : result.audit) {
        ojson flagged = ojson::array();
        for (const auto& q : round.flagged) {
            flagged.push_back({{"rater", q.rater_id},
                               {"infit", num(q.infit_mnsq)},
                               {"identity_rate", q.identity_rate ? num(*q.identity_rate) : ojson(nullptr)},
                               {"severity", num(q.severity)},
                               {"reasons", q.exclusion_reasons}});
        }
        audit.push_back({{"round", round.round},
                         {"raters", round.raters},
                         {"log_likelihood", num(round.log_likelihood)},
                         {"converged", round.converged},
                         {"applied", round.applied},
                         {"refused", round.refused},
                         {"flagged", flagged}});
    }
    ojson j{{"excluded_raters", result.excluded_raters}, {"rounds", audit}, {"warnings", result.warnings}};
    if (!o.kept.empty()) {
        std::unordered_set<std::string> dropped(result.excluded_raters.begin(), result.excluded_raters.end());
        std::vector<Response> kept;
        for (const auto& r : raw) {
            if (!dropped.count(r.rater_id)) kept.push_back(r);
        }
        write_file_atomic(o.kept, responses_to_csv(kept));
    }
    if (!o.params_out.empty()) {
        FacetParameters params = result.final.parameters;
        for (auto& item : params.items) {
            for (const auto& original : items) {
                if (original.id == item.id && original.collapse_map) item.collapse_map = original.collapse_map;
            }
        }
        write_file_atomic(o.params_out, parameters_to_json(params));
    }
    emit(g, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- score / pv-table

struct ScoreOpts {
    std::string distributions;
    std::string params;
    std::string method = "pv";
    int replications = 32;
    std::string aggregation = "mean";
    std::string ability = "wle";
};

void run_score(const Globals& g, const ScoreOpts& o) {
    const auto items = items_from_json(read_file(o.params));
    const auto dists = distributions_from_csv(read_file(o.distributions));
    const AbilityMethod method = parse_method(o.ability);
    if (o.method == "modal") {
        const auto scores = score_modal(dists, items, method);
        if (g.format == "json") {
            ojson a = ojson::array();
            for (const auto& s : scores) a.push_back({{"comment_id", s.comment_id}, {"theta", num(s.theta)}, {"se", num(s.se)}, {"raw", s.raw_score}});
            emit(g, a.dump(2) + "\n");
        } else {
            emit(g, modal_scores_to_csv(scores));
        }
        return;
    }
    if (o.method != "pv") throw ConfigError("score: --method must be 'pv' or 'modal'");
    PlausibleValueConfig pv;
    pv.replications = o.replications;
    pv.seed = g.seed;
    if (o.aggregation == "median") pv.aggregation = Aggregation::MedianTheta;
    else if (o.aggregation != "mean") throw ConfigError("score: --aggregation must be 'mean' or 'median'");
    const auto scores = score_plausible(dists, items, pv, method);
    if (g.format == "json") {
        ojson a = ojson::array();
        for (const auto& s : scores) a.push_back({{"comment_id", s.comment_id}, {"theta", num(s.theta)}, {"sd", num(s.theta_sd)}, {"raw", num(s.raw_mean)}});
        emit(g, a.dump(2) + "\n");
    } else {
        emit(g, plausible_scores_to_csv(scores));
    }
}

void run_pv_table(const Globals& g, const std::string& params, const std::string& ability) {
    const auto table = raw_score_table(items_from_json(read_file(params)), parse_method(ability));
    if (g.format == "json") {
        ojson a = ojson::array();
        for (const auto& r : table) a.push_back({{"raw", r.raw_score}, {"theta", num(r.theta)}, {"se", num(r.se)}});
        emit(g, a.dump(2) + "\n");
    } else {
        emit(g, raw_table_to_csv(table));
    }
}

// ---------------------------------------------------------------- train-head / predict

struct TrainOpts {
    std::string train;
    std::string validation;
    std::string items;
    int hidden = 64;
    double dropout = 0.10;
    double lr = 0.05;
    int batch = 32;
    int epochs = 40;
    std::string head = "ordinal";
    std::string log;
};

void run_train(const Globals& g, const TrainOpts& o) {
    const auto table = training_from_csv(read_file(o.train));
    const auto items = load_items(o.items);
    std::vector<int> categories;
    for (const auto& id : table.item_ids) {
        const ItemSpec* found = nullptr;
        for (const auto& item : items) {
            if (item.id == id) found = &item;
        }
        if (!found) throw InputError("train-head: label column for unknown item '" + id + "'");
        categories.push_back(found->num_categories);
    }
    MultitaskConfig config;
    config.hidden_units = o.hidden;
    config.dropout = o.dropout;
    config.learning_rate = o.lr;
    config.batch_size = o.batch;
    config.epochs = o.epochs;
    config.seed = g.seed;
    if (o.head == "categorical") config.head = HeadKind::Categorical;
    else if (o.head != "ordinal") throw ConfigError("train-head: --head must be 'ordinal' or 'categorical'");
    TrainingTable validation;
    if (!o.validation.empty()) {
        validation = training_from_csv(read_file(o.validation));
        if (validation.item_ids != table.item_ids) throw InputError("train-head: validation columns differ from training");
    }
    TrainingLog log;
    const auto head = train_multitask(table.rows, table.item_ids, categories, config,
                                      o.validation.empty() ? nullptr : &validation.rows, &log);
    if (!o.log.empty()) {
        std::string csv = "epoch,train_loss,validation_loss\n";
        for (std::size_t e = 0; e < log.train_loss.size(); ++e) {
            csv += std::to_string(e + 1) + "," + format_decimal(log.train_loss[e]) + "," +
                   (e < log.validation_loss.size() ? format_decimal(log.validation_loss[e]) : "") + "\n";
        }
        write_file_atomic(o.log, csv);
    }
    emit(g, head_to_json(head));
}

void run_predict(const Globals& g, const std::string& head_path, const std::string& rows_path, double severity) {
    const auto head = head_from_json(read_file(head_path));
    const auto table = training_from_csv(read_file(rows_path));
    std::vector<PredictionRow> rows;
    std::unordered_set<std::string> seen;
    for (const auto& r : table.rows) {
        if (seen.insert(r.comment_id).second) rows.push_back(PredictionRow{r.comment_id, severity, r.features});
    }
    emit(g, distributions_to_csv(predict_distributions(head, rows)));
}

// ---------------------------------------------------------------- validate / split

int run_validate(const Globals& g, const std::string& responses, const std::string& items) {
    const auto report = validate_responses(read_file(responses), load_items(items));
    emit(g, report.to_json());
    return report.ok() ? 0 : 1;
}

struct SplitOpts {
    std::string responses;
    std::string training;
    double fraction = 0.2;
    std::string train_out;
    std::string test_out;
};

void run_split(const Globals& g, const SplitOpts& o) {
    if (o.train_out.empty() || o.test_out.empty()) throw ConfigError("split: --train-out and --test-out are required");
    std::size_t train_rows = 0, test_rows = 0;
    if (!o.responses.empty()) {
        const auto split = split_clustered(responses_from_csv(read_file(o.responses)), o.fraction, g.seed);
        write_file_atomic(o.train_out, responses_to_csv(split.train));
        write_file_atomic(o.test_out, responses_to_csv(split.test));
        train_rows = split.train.size();
        test_rows = split.test.size();
    } else if (!o.training.empty()) {
        const auto table = training_from_csv(read_file(o.training));
        const auto split = split_clustered(table.rows, o.fraction, g.seed);
        write_file_atomic(o.train_out, training_to_csv({table.item_ids, split.train}));
        write_file_atomic(o.test_out, training_to_csv({table.item_ids, split.test}));
        train_rows = split.train.size();
        test_rows = split.test.size();
    } else {
        throw ConfigError("split: give --responses or --training");
    }
    emit(g, ojson{{"train_rows", train_rows}, {"test_rows", test_rows}}.dump() + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"facet: many-facet Rasch measurement pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--out", g.out, "Output path ('-' for stdout)");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));

    SimulateOpts sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate ratings from a judging plan");
    simulate->add_option("--items", sim.items, "Instrument JSON")->required();
    simulate->add_option("--comments", sim.comments, "Number of comments");
    simulate->add_option("--raters", sim.raters, "Number of raters");
    simulate->add_option("--ratings-per-comment", sim.ratings_per_comment);
    simulate->add_option("--group-size", sim.group_size);
    simulate->add_option("--originals-per-batch", sim.originals_per_batch);
    simulate->add_option("--ability-sd", sim.ability_sd);
    simulate->add_option("--severity-sd", sim.severity_sd);
    simulate->add_option("--identity-rate", sim.identity_rate);
    simulate->add_option("--truth", sim.truth, "Write the generating parameters here");
    simulate->add_option("--plan-out", sim.plan_out, "Write the judging plan here");

    PlanOpts plan;
    auto* plan_cmd = app.add_subcommand("plan", "Build a judging plan");
    plan_cmd->add_option("--comments", plan.comments, "File with one original comment id per line");
    plan_cmd->add_option("--count", plan.count, "Generate this many comment ids instead");
    plan_cmd->add_option("--references", plan.references, "CSV of tag,comment_id reference comments");
    plan_cmd->add_option("--strata", plan.strata, "CSV of comment_id,stratum");
    plan_cmd->add_option("--ratings-per-comment", plan.ratings_per_comment);
    plan_cmd->add_option("--group-size", plan.group_size);
    plan_cmd->add_option("--originals-per-batch", plan.originals_per_batch);
    plan_cmd->add_option("--reference-per-batch", plan.reference_per_batch);
    plan_cmd->add_option("--report", plan.report, "Write a linkage report here");

    ServeOpts serve;
    auto* serve_cmd = app.add_subcommand("serve", "Lease batches over HTTP");
    serve_cmd->add_option("--plan", serve.plan, "Plan JSON (optional when the store already holds state)");
    serve_cmd->add_option("--listen", serve.listen, "host:port (env FACET_LISTEN)");
    serve_cmd->add_option("--store", serve.store, "Append-only log (env FACET_STORE)");
    serve_cmd->add_option("--lease-hours", serve.lease_hours, "Lease duration (env FACET_LEASE_HOURS, default 10)");
    serve_cmd->add_option("--items", serve.items, "Instrument JSON for payload checks");

    EstimateOpts est;
    auto* estimate_cmd = app.add_subcommand("estimate", "Calibrate all facets");
    estimate_cmd->add_option("--responses", est.responses)->required();
    estimate_cmd->add_option("--items", est.items)->required();
    estimate_cmd->add_option("--anchors", est.anchors, "Parameter file with anchored items/raters");
    estimate_cmd->add_option("--max-iterations", est.max_iterations);
    estimate_cmd->add_option("--tol", est.tol);
    estimate_cmd->add_option("--ability", est.ability, "wle or mle")->check(CLI::IsMember({"wle", "mle"}));

    DiagnoseOpts diag;
    auto* diagnose_cmd = app.add_subcommand("diagnose", "Fit statistics and instrument checks");
    diagnose_cmd->add_option("--responses", diag.responses)->required();
    diagnose_cmd->add_option("--params", diag.params)->required();
    diagnose_cmd->add_option("--binary-item", diag.binary_item);
    diagnose_cmd->add_option("--wright", diag.wright, "Write a Wright map CSV here");
    diagnose_cmd->add_option("--min-pairs", diag.min_pairs);

    FilterOpts filt;
    auto* filter_cmd = app.add_subcommand("filter-raters", "Exclude misfitting raters and refit");
    filter_cmd->add_option("--responses", filt.responses)->required();
    filter_cmd->add_option("--items", filt.items)->required();
    filter_cmd->add_option("--infit-max", filt.infit_max);
    filter_cmd->add_option("--infit-min", filt.infit_min);
    filter_cmd->add_option("--identity-min", filt.identity_min);
    filter_cmd->add_option("--severity-max", filt.severity_max, "Exclude |severity| above this (0 = off)");
    filter_cmd->add_option("--infit-quantile", filt.infit_quantile, "Exclude infit above this quantile (0 = off)");
    filter_cmd->add_option("--rounds", filt.rounds);
    filter_cmd->add_option("--kept", filt.kept, "Write the retained responses here");
    filter_cmd->add_option("--params-out", filt.params_out, "Write the final parameters here");

    ScoreOpts score;
    auto* score_cmd = app.add_subcommand("score", "Score predicted distributions");
    score_cmd->add_option("--distributions", score.distributions)->required();
    score_cmd->add_option("--params", score.params)->required();
    score_cmd->add_option("--method", score.method)->check(CLI::IsMember({"pv", "modal"}));
    score_cmd->add_option("--replications", score.replications);
    score_cmd->add_option("--aggregation", score.aggregation)->check(CLI::IsMember({"mean", "median"}));
    score_cmd->add_option("--ability", score.ability)->check(CLI::IsMember({"wle", "mle"}));

    std::string pv_params, pv_ability = "wle";
    auto* pv_cmd = app.add_subcommand("pv-table", "Raw score to theta table");
    pv_cmd->add_option("--params", pv_params)->required();
    pv_cmd->add_option("--ability", pv_ability)->check(CLI::IsMember({"wle", "mle"}));

    TrainOpts train;
    auto* train_cmd = app.add_subcommand("train-head", "Train the multitask ordinal head");
    train_cmd->add_option("--train", train.train)->required();
    train_cmd->add_option("--validation", train.validation);
    train_cmd->add_option("--items", train.items)->required();
    train_cmd->add_option("--hidden", train.hidden);
    train_cmd->add_option("--dropout", train.dropout);
    train_cmd->add_option("--lr", train.lr);
    train_cmd->add_option("--batch", train.batch);
    train_cmd->add_option("--epochs", train.epochs);
    train_cmd->add_option("--head", train.head)->check(CLI::IsMember({"ordinal", "categorical"}));
    train_cmd->add_option("--log", train.log, "Write per-epoch losses here");

    std::string head_path, rows_path;
    double predict_severity = 0.0;
    auto* predict_cmd = app.add_subcommand("predict", "Predict rating distributions");
    predict_cmd->add_option("--head", head_path)->required();
    predict_cmd->add_option("--rows", rows_path, "Rows in training format; labels are ignored")->required();
    predict_cmd->add_option("--severity", predict_severity, "Rater severity to condition on");

    std::string val_responses, val_items;
    auto* validate_cmd = app.add_subcommand("validate", "Check a response file");
    validate_cmd->add_option("--responses", val_responses)->required();
    validate_cmd->add_option("--items", val_items)->required();

    SplitOpts split;
    auto* split_cmd = app.add_subcommand("split", "Comment-clustered train/test split");
    split_cmd->add_option("--responses", split.responses);
    split_cmd->add_option("--training", split.training);
    split_cmd->add_option("--test-fraction", split.fraction);
    split_cmd->add_option("--train-out", split.train_out);
    split_cmd->add_option("--test-out", split.test_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) run_simulate(g, sim);
        else if (plan_cmd->parsed()) run_plan(g, plan);
        else if (serve_cmd->parsed()) run_serve(g, serve, app.count("--seed") > 0);
        else if (estimate_cmd->parsed()) run_estimate(g, est);
        else if (diagnose_cmd->parsed()) run_diagnose(g, diag);
        else if (filter_cmd->parsed()) run_filter(g, filt);
        else if (score_cmd->parsed()) run_score(g, score);
        else if (pv_cmd->parsed()) run_pv_table(g, pv_params, pv_ability);
        else if (train_cmd->parsed()) run_train(g, train);
        else if (predict_cmd->parsed()) run_predict(g, head_path, rows_path, predict_severity);
        else if (validate_cmd->parsed()) return run_validate(g, val_responses, val_items);
        else if (split_cmd->parsed()) run_split(g, split);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const DisconnectedError& e) {
        std::fprintf(stderr, "error: %s\n%s\n", e.what(), e.component_report().c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
