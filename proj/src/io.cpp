#include "facet/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "facet/error.hpp"

namespace facet {

using ojson = nlohmann::ordered_json;

std::string format_decimal(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

double parse_decimal(const std::string& text) {
    if (text == "nan") return kNaN;
    if (text == "inf") return kInf;
    if (text == "-inf") return -kInf;
    if (text.empty()) throw InputError("empty number");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(v)) {
        throw InputError("malformed number '" + text + "'");
    }
    return v;
}

namespace {

int parse_int(const std::string& text) {
    if (text.empty()) throw InputError("empty integer");
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size() || errno == ERANGE || v < -1000000000L || v > 1000000000L) {
        throw InputError("malformed integer '" + text + "'");
    }
    return static_cast<int>(v);
}

std::string line_error(std::size_t line, const std::string& message) {
    return "line " + std::to_string(line) + ": " + message;
}

std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    out += '\n';
    return out;
}

// JSON numbers; non-finite values become the strings format_decimal uses.
ojson json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_decimal(v);
}

double number_from_json(const ojson& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_decimal(j.get<std::string>());
    if (j.is_null()) return kNaN;
    throw InputError("expected a number, got " + j.dump());
}

ojson json_numbers(const std::vector<double>& values) {
    ojson a = ojson::array();
    for (double v : values) a.push_back(json_number(v));
    return a;
}

std::vector<double> numbers_from_json(const ojson& j) {
    if (!j.is_array()) throw InputError("expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(number_from_json(v));
    return out;
}

ojson parse_json(const std::string& text) {
    try {
        return ojson::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed JSON: ") + e.what());
    }
}

template <typename F>
auto with_json_errors(F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("unexpected JSON structure: ") + e.what());
    }
}

ojson item_to_json(const ItemSpec& item) {
    ojson j;
    j["id"] = item.id;
    j["difficulty"] = json_number(item.difficulty);
    j["steps"] = json_numbers(item.steps);
    j["categories"] = item.num_categories;
    if (item.collapse_map) j["collapse_map"] = *item.collapse_map;
    if (std::isfinite(item.difficulty_se)) j["difficulty_se"] = item.difficulty_se;
    if (!item.step_se.empty()) j["step_se"] = json_numbers(item.step_se);
    return j;
}

ItemSpec item_from_json(const ojson& j) {
    ItemSpec item;
    item.id = j.at("id").get<std::string>();
    item.difficulty = number_from_json(j.at("difficulty"));
    item.steps = numbers_from_json(j.at("steps"));
    item.num_categories = j.contains("categories") ? j.at("categories").get<int>() : static_cast<int>(item.steps.size()) + 1;
    if (j.contains("collapse_map")) item.collapse_map = j.at("collapse_map").get<std::vector<int>>();
    if (j.contains("difficulty_se")) item.difficulty_se = number_from_json(j.at("difficulty_se"));
    if (j.contains("step_se")) item.step_se = numbers_from_json(j.at("step_se"));
    validate_item(item);
    return item;
}

ojson items_json(const std::vector<ItemSpec>& items) {
    ojson a = ojson::array();
    for (const auto& item : items) a.push_back(item_to_json(item));
    return a;
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp" + std::to_string(std::random_device{}());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot replace '" + path + "'");
    }
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            } else {
                rows.emplace_back();  // blank line keeps line numbering
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw InputError("unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string responses_to_csv(const std::vector<Response>& responses) {
    std::string out = std::string(kResponseHeader) + "\n";
    for (const auto& r : responses) {
        out += join_row({r.comment_id, r.rater_id, r.item_id, std::to_string(r.rating),
                         r.any_identity ? (*r.any_identity ? "1" : "0") : "",
                         r.weight ? format_decimal(*r.weight) : ""});
    }
    return out;
}

namespace {

Response response_from_fields(const std::vector<std::string>& f) {
    if (f.size() < 4 || f.size() > 6) throw InputError("expected 4 to 6 fields, got " + std::to_string(f.size()));
    Response r;
    r.comment_id = f[0];
    r.rater_id = f[1];
    r.item_id = f[2];
    if (r.comment_id.empty() || r.rater_id.empty() || r.item_id.empty()) throw InputError("empty identifier");
    try {
        r.rating = parse_int(f[3]);
    } catch (const InputError&) {
        throw InputError("rating '" + f[3] + "' is not an integer");
    }
    if (f.size() > 4 && !f[4].empty()) {
        if (f[4] == "1") r.any_identity = true;
        else if (f[4] == "0") r.any_identity = false;
        else throw InputError("any_identity must be 0, 1 or empty, got '" + f[4] + "'");
    }
    if (f.size() > 5 && !f[5].empty()) {
        const double w = parse_decimal(f[5]);
        if (!(w >= 0.0)) throw InputError("weight must be nonnegative");
        r.weight = w;
    }
    return r;
}

void check_header(const std::vector<std::vector<std::string>>& rows, const std::string& expected) {
    if (rows.empty()) throw InputError("empty file");
    std::string got;
    for (std::size_t i = 0; i < rows[0].size(); ++i) got += (i ? "," : "") + rows[0][i];
    if (got != expected) throw InputError("line 1: expected header '" + expected + "', got '" + got + "'");
}

}  // namespace

std::vector<Response> responses_from_csv(const std::string& text) {
    const auto rows = parse_csv(text);
    check_header(rows, kResponseHeader);
    std::vector<Response> out;
    out.reserve(rows.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        try {
            out.push_back(response_from_fields(rows[i]));
        } catch (const InputError& e) {
            throw InputError(line_error(i + 1, e.what()));
        }
    }
    return out;
}

std::string parameters_to_json(const FacetParameters& params) {
    ojson j;
    j["items"] = items_json(params.items);
    ojson raters = ojson::array();
    for (const auto& r : params.raters) {
        ojson e;
        e["id"] = r.id;
        e["severity"] = json_number(r.severity);
        e["se"] = json_number(r.severity_se);
        raters.push_back(std::move(e));
    }
    j["raters"] = std::move(raters);
    ojson comments = ojson::array();
    for (const auto& c : params.comments) {
        ojson e;
        e["id"] = c.id;
        e["theta"] = json_number(c.ability);
        e["se"] = json_number(c.ability_se);
        if (c.sampling_weight != 1.0) e["weight"] = c.sampling_weight;
        comments.push_back(std::move(e));
    }
    j["comments"] = std::move(comments);
    double item_sum = 0.0, rater_sum = 0.0, step_max = 0.0;
    for (const auto& i : params.items) {
        item_sum += i.difficulty;
        double s = 0.0;
        for (double t : i.steps) s += t;
        step_max = std::max(step_max, std::abs(s));
    }
    for (const auto& r : params.raters) rater_sum += r.severity;
    ojson meta;
    meta["version"] = kParameterVersion;
    meta["converged"] = params.converged;
    meta["log_likelihood"] = json_number(params.log_likelihood);
    meta["constraints"] = {{"item_difficulty_sum", json_number(item_sum)},
                           {"rater_severity_sum", json_number(rater_sum)},
                           {"max_abs_step_sum", json_number(step_max)}};
    j["meta"] = std::move(meta);
    return j.dump(2) + "\n";
}

FacetParameters parameters_from_json(const std::string& text) {
    const ojson j = parse_json(text);
    return with_json_errors([&] {
        FacetParameters p;
        if (j.contains("meta")) {
            const auto& meta = j.at("meta");
            if (meta.contains("version") && meta.at("version").get<std::string>() != kParameterVersion) {
                throw InputError("unsupported parameter file version '" + meta.at("version").get<std::string>() + "'");
            }
            if (meta.contains("converged")) p.converged = meta.at("converged").get<bool>();
            if (meta.contains("log_likelihood")) p.log_likelihood = number_from_json(meta.at("log_likelihood"));
        }
        for (const auto& e : j.at("items")) p.items.push_back(item_from_json(e));
        if (j.contains("raters")) {
            for (const auto& e : j.at("raters")) {
                RaterSpec r;
                r.id = e.at("id").get<std::string>();
                r.severity = number_from_json(e.at("severity"));
                if (e.contains("se")) r.severity_se = number_from_json(e.at("se"));
                p.raters.push_back(std::move(r));
            }
        }
        if (j.contains("comments")) {
            for (const auto& e : j.at("comments")) {
                CommentSpec c;
                c.id = e.at("id").get<std::string>();
                c.ability = number_from_json(e.at("theta"));
                if (e.contains("se")) c.ability_se = number_from_json(e.at("se"));
                if (e.contains("weight")) c.sampling_weight = number_from_json(e.at("weight"));
                p.comments.push_back(std::move(c));
            }
        }
        return p;
    });
}

std::vector<ItemSpec> items_from_json(const std::string& text) {
    const ojson j = parse_json(text);
    return with_json_errors([&] {
        std::vector<ItemSpec> items;
        for (const auto& e : j.at("items")) items.push_back(item_from_json(e));
        std::unordered_set<std::string> seen;
        for (const auto& item : items) {
            if (!seen.insert(item.id).second) throw InputError("duplicate item id '" + item.id + "'");
        }
        return items;
    });
}

std::string items_to_json(const std::vector<ItemSpec>& items) {
    ojson j;
    j["items"] = items_json(items);
    j["meta"] = {{"version", kParameterVersion}};
    return j.dump(2) + "\n";
}

std::string distributions_to_csv(const std::vector<RatingDistribution>& distributions) {
    std::size_t width = 2;
    for (const auto& d : distributions) width = std::max(width, d.probabilities.size());
    std::vector<std::string> header{"comment_id", "item_id"};
    for (std::size_t k = 0; k < width; ++k) header.push_back("p" + std::to_string(k));
    std::string out = join_row(header);
    for (const auto& d : distributions) {
        std::vector<std::string> row{d.comment_id, d.item_id};
        for (double p : d.probabilities) row.push_back(format_decimal(p));
        out += join_row(row);
    }
    return out;
}

std::vector<RatingDistribution> distributions_from_csv(const std::string& text) {
    const auto rows = parse_csv(text);
    if (rows.empty() || rows[0].size() < 4 || rows[0][0] != "comment_id" || rows[0][1] != "item_id") {
        throw InputError("line 1: expected header 'comment_id,item_id,p0,p1,...'");
    }
    std::vector<RatingDistribution> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.empty()) continue;
        try {
            RatingDistribution d;
            if (f.size() < 4) throw InputError("a distribution needs at least two probabilities");
            d.comment_id = f[0];
            d.item_id = f[1];
            std::size_t last = f.size();
            while (last > 2 && f[last - 1].empty()) --last;
            for (std::size_t k = 2; k < last; ++k) d.probabilities.push_back(parse_decimal(f[k]));
            double total = 0.0;
            for (double p : d.probabilities) total += p;
            // Rows that already sum to one at written precision are kept verbatim.
            if (std::abs(total - 1.0) > 1e-9) normalize_distribution(d);
            else {
                RatingDistribution check = d;
                normalize_distribution(check);
            }
            out.push_back(std::move(d));
        } catch (const InputError& e) {
            throw InputError(line_error(i + 1, e.what()));
        }
    }
    return out;
}

std::string training_to_csv(const TrainingTable& table) {
    const std::size_t dim = table.rows.empty() ? 0 : table.rows.front().features.size();
    std::vector<std::string> header{"comment_id", "rater_id", "severity"};
    for (std::size_t k = 0; k < dim; ++k) header.push_back("x" + std::to_string(k));
    for (const auto& id : table.item_ids) header.push_back("y:" + id);
    std::string out = join_row(header);
    for (const auto& r : table.rows) {
        if (r.features.size() != dim || r.labels.size() != table.item_ids.size()) {
            throw InputError("training row for comment '" + r.comment_id + "' has the wrong width");
        }
        std::vector<std::string> row{r.comment_id, r.rater_id, format_decimal(r.severity)};
        for (double x : r.features) row.push_back(format_decimal(x));
        for (const auto& y : r.labels) row.push_back(y ? std::to_string(*y) : "");
        out += join_row(row);
    }
    return out;
}

TrainingTable training_from_csv(const std::string& text) {
    const auto rows = parse_csv(text);
    if (rows.empty() || rows[0].size() < 3 || rows[0][0] != "comment_id" || rows[0][1] != "rater_id" ||
        rows[0][2] != "severity") {
        throw InputError("line 1: expected header 'comment_id,rater_id,severity,x0,...,y:<item>,...'");
    }
    TrainingTable table;
    std::size_t dim = 0;
    bool labels_started = false;
    for (std::size_t c = 3; c < rows[0].size(); ++c) {
        const auto& name = rows[0][c];
        if (name.rfind("y:", 0) == 0 && name.size() > 2) {
            labels_started = true;
            table.item_ids.push_back(name.substr(2));
        } else if (!labels_started && name == "x" + std::to_string(dim)) {
            ++dim;
        } else {
            throw InputError("line 1: unexpected column '" + name + "'");
        }
    }
    if (table.item_ids.empty()) throw InputError("line 1: no label columns");
    const std::size_t width = 3 + dim + table.item_ids.size();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.empty()) continue;
        try {
            if (f.size() != width) throw InputError("expected " + std::to_string(width) + " fields, got " + std::to_string(f.size()));
            TrainingRow r;
            r.comment_id = f[0];
            r.rater_id = f[1];
            if (r.comment_id.empty()) throw InputError("empty comment_id");
            r.severity = parse_decimal(f[2]);
            for (std::size_t k = 0; k < dim; ++k) r.features.push_back(parse_decimal(f[3 + k]));
            for (std::size_t k = 0; k < table.item_ids.size(); ++k) {
                const auto& v = f[3 + dim + k];
                r.labels.push_back(v.empty() ? std::nullopt : std::optional<int>(parse_int(v)));
            }
            table.rows.push_back(std::move(r));
        } catch (const InputError& e) {
            throw InputError(line_error(i + 1, e.what()));
        }
    }
    return table;
}

std::string modal_scores_to_csv(const std::vector<ModalScore>& scores) {
    std::string out = "comment_id,theta,se,raw\n";
    for (const auto& s : scores) {
        out += join_row({s.comment_id, format_decimal(s.theta), format_decimal(s.se), std::to_string(s.raw_score)});
    }
    return out;
}

std::string plausible_scores_to_csv(const std::vector<PlausibleScore>& scores) {
    std::string out = "comment_id,theta,sd,raw\n";
    for (const auto& s : scores) {
        out += join_row({s.comment_id, format_decimal(s.theta), format_decimal(s.theta_sd), format_decimal(s.raw_mean)});
    }
    return out;
}

std::string raw_table_to_csv(const std::vector<RawScoreRow>& table) {
    std::string out = "raw,theta,se\n";
    for (const auto& r : table) out += join_row({std::to_string(r.raw_score), format_decimal(r.theta), format_decimal(r.se)});
    return out;
}

namespace {

template <typename F>
void for_each_data_row(const std::string& text, const std::string& header, F&& f) {
    const auto rows = parse_csv(text);
    check_header(rows, header);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        try {
            if (rows[i].size() != 4 && header != "raw,theta,se") throw InputError("expected 4 fields");
            f(rows[i]);
        } catch (const InputError& e) {
            throw InputError(line_error(i + 1, e.what()));
        }
    }
}

}  // namespace

std::vector<ModalScore> modal_scores_from_csv(const std::string& text) {
    std::vector<ModalScore> out;
    for_each_data_row(text, "comment_id,theta,se,raw", [&](const std::vector<std::string>& f) {
        out.push_back(ModalScore{f[0], parse_decimal(f[1]), parse_decimal(f[2]), parse_int(f[3])});
    });
    return out;
}

std::vector<PlausibleScore> plausible_scores_from_csv(const std::string& text) {
    std::vector<PlausibleScore> out;
    for_each_data_row(text, "comment_id,theta,sd,raw", [&](const std::vector<std::string>& f) {
        PlausibleScore s;
        s.comment_id = f[0];
        s.theta = parse_decimal(f[1]);
        s.theta_sd = parse_decimal(f[2]);
        s.raw_mean = parse_decimal(f[3]);
        out.push_back(std::move(s));
    });
    return out;
}

std::vector<RawScoreRow> raw_table_from_csv(const std::string& text) {
    std::vector<RawScoreRow> out;
    for_each_data_row(text, "raw,theta,se", [&](const std::vector<std::string>& f) {
        if (f.size() != 3) throw InputError("expected 3 fields");
        out.push_back(RawScoreRow{parse_int(f[0]), parse_decimal(f[1]), parse_decimal(f[2])});
    });
    return out;
}

std::string plan_to_json(const JudgingPlan& plan) {
    ojson j;
    j["version"] = kPlanVersion;
    j["groups"] = plan.groups;
    ojson batches = ojson::array();
    for (const auto& b : plan.batches) {
        batches.push_back({{"id", b.id}, {"originals", b.originals}, {"references", b.references}});
    }
    j["batches"] = std::move(batches);
    return j.dump(2) + "\n";
}

JudgingPlan plan_from_json(const std::string& text) {
    const ojson j = parse_json(text);
    return with_json_errors([&] {
        if (j.at("version").get<std::string>() != kPlanVersion) throw InputError("unsupported plan file version");
        JudgingPlan plan;
        plan.groups = j.at("groups").get<std::vector<std::vector<std::string>>>();
        std::unordered_set<std::string> ids;
        for (const auto& b : j.at("batches")) {
            Batch batch;
            batch.id = b.at("id").get<std::string>();
            batch.originals = b.at("originals").get<std::vector<std::string>>();
            batch.references = b.at("references").get<std::vector<std::string>>();
            if (!ids.insert(batch.id).second) throw InputError("duplicate batch id '" + batch.id + "'");
            plan.batches.push_back(std::move(batch));
        }
        return plan;
    });
}

std::string head_to_json(const MultitaskHead& head) {
    ojson j;
    j["version"] = kHeadVersion;
    j["kind"] = head.kind == HeadKind::Ordinal ? "ordinal" : "categorical";
    j["feature_dim"] = head.feature_dim;
    j["hidden_units"] = head.hidden_units;
    j["feature_mean"] = json_numbers(head.feature_mean);
    j["feature_scale"] = json_numbers(head.feature_scale);
    j["hidden_weight"] = json_numbers(head.hidden_weight);
    j["hidden_bias"] = json_numbers(head.hidden_bias);
    ojson items = ojson::array();
    for (std::size_t i = 0; i < head.item_ids.size(); ++i) {
        ojson e;
        e["id"] = head.item_ids[i];
        e["categories"] = head.categories[i];
        if (head.kind == HeadKind::Ordinal) {
            const auto& o = head.ordinal[i];
            e["weight"] = json_numbers(o.weight);
            e["base_bias"] = json_number(o.base_bias);
            e["gap_params"] = json_numbers(o.gap_params);
        } else {
            const auto& c = head.categorical[i];
            e["weight"] = json_numbers(c.weight);
            e["bias"] = json_numbers(c.bias);
        }
        items.push_back(std::move(e));
    }
    j["items"] = std::move(items);
    return j.dump(2) + "\n";
}

MultitaskHead head_from_json(const std::string& text) {
    const ojson j = parse_json(text);
    return with_json_errors([&] {
        if (j.at("version").get<std::string>() != kHeadVersion) throw InputError("unsupported head file version");
        MultitaskHead h;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "ordinal") h.kind = HeadKind::Ordinal;
        else if (kind == "categorical") h.kind = HeadKind::Categorical;
        else throw InputError("unknown head kind '" + kind + "'");
        h.feature_dim = j.at("feature_dim").get<std::size_t>();
        h.hidden_units = j.at("hidden_units").get<int>();
        h.feature_mean = numbers_from_json(j.at("feature_mean"));
        h.feature_scale = numbers_from_json(j.at("feature_scale"));
        h.hidden_weight = numbers_from_json(j.at("hidden_weight"));
        h.hidden_bias = numbers_from_json(j.at("hidden_bias"));
        const auto H = static_cast<std::size_t>(h.hidden_units);
        if (h.hidden_units < 1 || h.feature_mean.size() != h.feature_dim || h.feature_scale.size() != h.feature_dim ||
            h.hidden_weight.size() != H * (h.feature_dim + 1) || h.hidden_bias.size() != H) {
            throw InputError("head file: inconsistent dimensions");
        }
        for (const auto& e : j.at("items")) {
            h.item_ids.push_back(e.at("id").get<std::string>());
            const int k = e.at("categories").get<int>();
            if (k < 2) throw InputError("head file: item with fewer than two categories");
            h.categories.push_back(k);
            if (h.kind == HeadKind::Ordinal) {
                OrdinalHead o;
                o.weight = numbers_from_json(e.at("weight"));
                o.base_bias = number_from_json(e.at("base_bias"));
                o.gap_params = numbers_from_json(e.at("gap_params"));
                if (o.weight.size() != H + 1 || o.num_categories() != k) throw InputError("head file: inconsistent item head");
                h.ordinal.push_back(std::move(o));
            } else {
                CategoricalHead c;
                c.categories = k;
                c.weight = numbers_from_json(e.at("weight"));
                c.bias = numbers_from_json(e.at("bias"));
                if (c.weight.size() != static_cast<std::size_t>(k) * (H + 1) || c.bias.size() != static_cast<std::size_t>(k)) {
                    throw InputError("head file: inconsistent item head");
                }
                h.categorical.push_back(std::move(c));
            }
        }
        return h;
    });
}

std::string ValidationReport::to_json() const {
    ojson j;
    j["ok"] = ok();
    j["errors"] = errors;
    j["warnings"] = warnings;
    j["summary"] = {{"rows", rows}, {"comments", comments}, {"raters", raters}, {"items", items}};
    return j.dump(2) + "\n";
}

ValidationReport validate_responses(const std::string& csv_text, const std::vector<ItemSpec>& items) {
    ValidationReport report;
    std::vector<std::vector<std::string>> rows;
    try {
        rows = parse_csv(csv_text);
        check_header(rows, kResponseHeader);
    } catch (const InputError& e) {
        report.errors.push_back(e.what());
        return report;
    }
    std::unordered_map<std::string, const ItemSpec*> by_id;
    for (const auto& item : items) by_id.emplace(item.id, &item);
    std::unordered_map<std::string, std::size_t> seen;  // triple -> first line
    std::unordered_set<std::string> comments, raters, used_items;
    std::unordered_map<std::string, std::set<int>> observed;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        const std::size_t line = i + 1;
        Response r;
        try {
            r = response_from_fields(rows[i]);
        } catch (const InputError& e) {
            report.errors.push_back(line_error(line, e.what()));
            continue;
        }
        ++report.rows;
        comments.insert(r.comment_id);
        raters.insert(r.rater_id);
        used_items.insert(r.item_id);
        auto it = by_id.find(r.item_id);
        if (it == by_id.end()) {
            report.errors.push_back(line_error(line, "unknown item '" + r.item_id + "'"));
        } else {
            const ItemSpec& item = *it->second;
            const int raw_max = item.collapse_map ? static_cast<int>(item.collapse_map->size()) - 1 : item.max_score();
            if (r.rating < 0 || r.rating > raw_max) {
                report.errors.push_back(line_error(line, "rating " + std::to_string(r.rating) + " outside 0.." +
                                                             std::to_string(raw_max) + " for item '" + item.id + "'"));
            } else {
                observed[item.id].insert(item.collapse_map ? (*item.collapse_map)[static_cast<std::size_t>(r.rating)] : r.rating);
            }
        }
        const std::string key = r.comment_id + '\x1f' + r.rater_id + '\x1f' + r.item_id;
        auto [pos, inserted] = seen.emplace(key, line);
        if (!inserted) {
            report.errors.push_back(line_error(line, "duplicate (comment, rater, item) triple (" + r.comment_id + ", " +
                                                         r.rater_id + ", " + r.item_id + ") first seen at line " +
                                                         std::to_string(pos->second)));
        }
    }
    for (const auto& item : items) {
        if (!used_items.count(item.id)) {
            report.warnings.push_back("item '" + item.id + "' has no responses");
            continue;
        }
        const auto& cats = observed[item.id];
        for (int k = 0; k < item.num_categories; ++k) {
            if (!cats.count(k)) report.warnings.push_back("item '" + item.id + "': category " + std::to_string(k) + " never observed");
        }
    }
    report.comments = comments.size();
    report.raters = raters.size();
    report.items = used_items.size();
    return report;
}

namespace {

std::unordered_set<std::string> pick_test_comments(const std::vector<std::string>& ordered_ids, double fraction,
                                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie strictly between 0 and 1");
    std::vector<std::string> ids = ordered_ids;
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, ids.size()))};
}

template <typename Row>
std::vector<std::string> distinct_comments(const std::vector<Row>& rows) {
    IdIndex index;
    for (const auto& r : rows) index.intern(r.comment_id);
    return index.names();
}

}  // namespace

ResponseSplit split_clustered(const std::vector<Response>& responses, double test_fraction, std::uint64_t seed) {
    const auto test_ids = pick_test_comments(distinct_comments(responses), test_fraction, seed);
    ResponseSplit out;
    for (const auto& r : responses) (test_ids.count(r.comment_id) ? out.test : out.train).push_back(r);
    return out;
}

TrainingSplit split_clustered(const std::vector<TrainingRow>& rows, double test_fraction, std::uint64_t seed) {
    const auto test_ids = pick_test_comments(distinct_comments(rows), test_fraction, seed);
    TrainingSplit out;
    for (const auto& r : rows) (test_ids.count(r.comment_id) ? out.test : out.train).push_back(r);
    return out;
}

}  // namespace facet
