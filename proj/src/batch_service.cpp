#include "facet/batch_service.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#define CPPHTTPLIB_LISTEN_BACKLOG 256
#include <httplib.h>
#include <json.hpp>

#include "facet/error.hpp"
#include "facet/io.hpp"

namespace facet {

using json = nlohmann::json;

const char* to_string(BatchStatus s) {
    switch (s) {
        case BatchStatus::Available: return "available";
        case BatchStatus::Reserved: return "reserved";
        case BatchStatus::Completed: return "completed";
    }
    return "unknown";
}

ServiceClock system_clock() {
    return [] {
        return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
    };
}

std::int64_t ServiceConfig::lease_seconds() const { return std::llround(lease_hours * 3600.0); }

void ServiceConfig::validate() const {
    if (!(lease_hours > 0.0) || !std::isfinite(lease_hours) || lease_seconds() < 1) {
        throw ConfigError("lease duration must be positive");
    }
}

void apply_environment(ServiceConfig& config) {
    if (const char* v = std::getenv("FACET_LISTEN"); v && *v) config.listen_address = v;
    if (const char* v = std::getenv("FACET_STORE"); v && *v) config.store_path = v;
    if (const char* v = std::getenv("FACET_LEASE_HOURS"); v && *v) {
        try {
            config.lease_hours = parse_decimal(v);
        } catch (const InputError&) {
            throw ConfigError(std::string("FACET_LEASE_HOURS is not a number: '") + v + "'");
        }
    }
}

std::pair<std::string, int> parse_listen_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
        throw ConfigError("listen address must look like host:port, got '" + address + "'");
    }
    const std::string host = address.substr(0, colon);
    const std::string port_text = address.substr(colon + 1);
    char* end = nullptr;
    const long port = std::strtol(port_text.c_str(), &end, 10);
    if (*end != '\0' || port < 0 || port > 65535) throw ConfigError("invalid port '" + port_text + "'");
    return {host, static_cast<int>(port)};
}

namespace {

std::uint32_t fnv1a32(const std::string& data) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : data) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
    return v;
}

json response_to_json(const Response& r) {
    json j{{"comment_id", r.comment_id}, {"rater_id", r.rater_id}, {"item_id", r.item_id}, {"rating", r.rating}};
    j["any_identity"] = r.any_identity ? json(*r.any_identity) : json(nullptr);
    j["weight"] = r.weight ? json(*r.weight) : json(nullptr);
    return j;
}

Response response_from_json(const json& j, const std::string& default_rater) {
    Response r;
    r.comment_id = j.at("comment_id").get<std::string>();
    r.rater_id = j.contains("rater_id") && !j.at("rater_id").is_null() ? j.at("rater_id").get<std::string>() : default_rater;
    r.item_id = j.at("item_id").get<std::string>();
    r.rating = j.at("rating").get<int>();
    if (j.contains("any_identity") && !j.at("any_identity").is_null()) {
        const auto& v = j.at("any_identity");
        r.any_identity = v.is_boolean() ? v.get<bool>() : v.get<int>() != 0;
    }
    if (j.contains("weight") && !j.at("weight").is_null()) r.weight = j.at("weight").get<double>();
    return r;
}

json batch_to_json(const Batch& b) {
    return json{{"id", b.id}, {"originals", b.originals}, {"references", b.references}};
}

}  // namespace

BatchService::BatchService(std::vector<Batch> batches, ServiceConfig config, ServiceClock clock)
    : config_(std::move(config)), clock_(std::move(clock)) {
    config_.validate();
    if (!clock_) throw ConfigError("batch service needs a clock");
    rng_.seed(config_.seed ? *config_.seed : (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}());
    if (!config_.store_path.empty()) replay();
    if (entries_.empty()) {
        if (batches.empty()) throw ConfigError("batch service: no plan and no stored state");
        std::unordered_set<std::string> ids;
        for (const auto& b : batches) {
            if (!ids.insert(b.id).second) throw ConfigError("duplicate batch id '" + b.id + "'");
        }
        json init{{"op", "init"}, {"batches", json::array()}};
        for (const auto& b : batches) init["batches"].push_back(batch_to_json(b));
        const std::string payload = init.dump();
        append(payload);
        apply(payload);
    } else if (!batches.empty()) {
        std::vector<std::string> stored, given;
        for (const auto& e : entries_) stored.push_back(e.batch.id);
        for (const auto& b : batches) given.push_back(b.id);
        std::sort(stored.begin(), stored.end());
        std::sort(given.begin(), given.end());
        if (stored != given) throw ConfigError("plan does not match the batches recorded in '" + config_.store_path + "'");
    }
}

BatchService::~BatchService() {
    if (log_) std::fclose(log_);
}

void BatchService::replay() {
    namespace fs = std::filesystem;
    std::string data;
    if (fs::exists(config_.store_path)) data = read_file(config_.store_path);
    std::size_t pos = 0;
    while (pos + 8 <= data.size()) {
        const std::uint32_t len = get_u32(data, pos);
        const std::uint32_t sum = get_u32(data, pos + 4);
        if (pos + 8 + len > data.size()) break;
        std::string payload = data.substr(pos + 8, len);
        if (fnv1a32(payload) != sum) break;
        try {
            apply(payload);
        } catch (const json::exception&) {
            break;
        } catch (const InputError&) {
            break;
        }
        pos += 8 + len;
    }
    if (pos < data.size()) {
        truncated_bytes_ = data.size() - pos;
        fs::resize_file(config_.store_path, pos);
    }
    log_ = std::fopen(config_.store_path.c_str(), "ab");
    if (!log_) throw Error("cannot open store '" + config_.store_path + "'");
}

void BatchService::append(const std::string& payload) {
    if (!log_) return;
    std::string record;
    record.reserve(payload.size() + 8);
    put_u32(record, static_cast<std::uint32_t>(payload.size()));
    put_u32(record, fnv1a32(payload));
    record += payload;
    if (std::fwrite(record.data(), 1, record.size(), log_) != record.size() || std::fflush(log_) != 0) {
        throw Error("cannot append to store '" + config_.store_path + "'");
    }
    ::fdatasync(::fileno(log_));
}

void BatchService::apply(const std::string& payload) {
    const json j = json::parse(payload);
    const std::string op = j.at("op").get<std::string>();
    if (op == "init") {
        entries_.clear();
        for (const auto& b : j.at("batches")) {
            Entry e;
            e.batch.id = b.at("id").get<std::string>();
            e.batch.originals = b.at("originals").get<std::vector<std::string>>();
            e.batch.references = b.at("references").get<std::vector<std::string>>();
            e.state.batch_id = e.batch.id;
            entries_.push_back(std::move(e));
        }
        return;
    }
    Entry* e = find(j.at("batch").get<std::string>());
    if (!e) throw InputError("unknown batch in log");
    const std::int64_t at = j.at("at").get<std::int64_t>();
    if (op == "reserve") {
        e->state.status = BatchStatus::Reserved;
        e->state.reserved_by = j.at("client").get<std::string>();
        e->state.reserved_at = at;
    } else if (op == "requeue") {
        e->state.status = BatchStatus::Available;
        e->state.reserved_by.reset();
        e->state.reserved_at.reset();
        e->last_expired_client = j.at("client").get<std::string>();
    } else if (op == "complete") {
        e->state.status = BatchStatus::Completed;
        e->state.completed_at = at;
        const std::string client = j.at("client").get<std::string>();
        for (const auto& r : j.at("responses")) responses_.push_back(response_from_json(r, client));
    } else {
        throw InputError("unknown log operation");
    }
}

BatchService::Entry* BatchService::find(const std::string& batch_id) {
    for (auto& e : entries_) {
        if (e.batch.id == batch_id) return &e;
    }
    return nullptr;
}

const BatchService::Entry* BatchService::find(const std::string& batch_id) const {
    for (const auto& e : entries_) {
        if (e.batch.id == batch_id) return &e;
    }
    return nullptr;
}

std::vector<std::string> BatchService::sweep_locked(std::int64_t now) {
    std::vector<std::string> requeued;
    const std::int64_t lease = config_.lease_seconds();
    for (auto& e : entries_) {
        if (e.state.status != BatchStatus::Reserved || now - *e.state.reserved_at <= lease) continue;
        const std::string payload =
            json{{"op", "requeue"}, {"batch", e.batch.id}, {"client", *e.state.reserved_by}, {"at", now}}.dump();
        append(payload);
        apply(payload);
        requeued.push_back(e.batch.id);
    }
    return requeued;
}

std::vector<std::string> BatchService::sweep_expired() { return sweep_expired(clock_()); }

std::vector<std::string> BatchService::sweep_expired(std::int64_t now) {
    std::unique_lock lock(mutex_);
    return sweep_locked(now);
}

std::optional<Reservation> BatchService::reserve(const std::string& client_id) {
    if (client_id.empty()) throw InputError("client_id must not be empty");
    std::unique_lock lock(mutex_);
    const std::int64_t now = clock_();
    sweep_locked(now);
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].state.status == BatchStatus::Available) open.push_back(i);
    }
    if (open.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
    Entry& e = entries_[open[pick(rng_)]];
    const std::string payload = json{{"op", "reserve"}, {"batch", e.batch.id}, {"client", client_id}, {"at", now}}.dump();
    append(payload);
    apply(payload);
    return Reservation{e.batch.id, e.batch.originals, e.batch.references, now, now + config_.lease_seconds()};
}

CompletionResult BatchService::complete(const std::string& batch_id, const std::string& client_id,
                                        const std::vector<Response>& responses) {
    std::unique_lock lock(mutex_);
    const std::int64_t now = clock_();
    Entry* e = find(batch_id);
    if (!e) return {CompletionStatus::NotFound, {"unknown batch '" + batch_id + "'"}};
    if (e->state.status == BatchStatus::Reserved && e->state.reserved_by == client_id &&
        now - *e->state.reserved_at > config_.lease_seconds()) {
        sweep_locked(now);
    }
    if (e->state.status == BatchStatus::Completed) return {CompletionStatus::Conflict, {"batch already completed"}};
    if (e->state.status == BatchStatus::Available) {
        if (e->last_expired_client == client_id) return {CompletionStatus::Gone, {"lease expired; batch was requeued"}};
        return {CompletionStatus::Conflict, {"batch is not reserved by this client"}};
    }
    if (e->state.reserved_by != client_id) return {CompletionStatus::Conflict, {"batch is reserved by another client"}};

    CompletionResult bad{CompletionStatus::Invalid, {}};
    if (responses.empty()) bad.errors.push_back("no responses");
    std::unordered_set<std::string> members(e->batch.originals.begin(), e->batch.originals.end());
    members.insert(e->batch.references.begin(), e->batch.references.end());
    std::unordered_map<std::string, const ItemSpec*> items;
    for (const auto& item : config_.items) items.emplace(item.id, &item);
    std::set<std::tuple<std::string, std::string, std::string>> triples;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& r = responses[i];
        const std::string where = "row " + std::to_string(i + 1) + ": ";
        if (r.comment_id.empty() || r.rater_id.empty() || r.item_id.empty()) bad.errors.push_back(where + "empty identifier");
        if (!members.count(r.comment_id)) bad.errors.push_back(where + "comment '" + r.comment_id + "' is not in this batch");
        if (r.rating < 0) bad.errors.push_back(where + "negative rating");
        if (r.weight && !(*r.weight >= 0.0)) bad.errors.push_back(where + "negative weight");
        if (!items.empty()) {
            auto it = items.find(r.item_id);
            if (it == items.end()) {
                bad.errors.push_back(where + "unknown item '" + r.item_id + "'");
            } else {
                const ItemSpec& item = *it->second;
                const int top = item.collapse_map ? static_cast<int>(item.collapse_map->size()) - 1 : item.max_score();
                if (r.rating > top) bad.errors.push_back(where + "rating above " + std::to_string(top));
            }
        }
        if (!triples.emplace(r.comment_id, r.rater_id, r.item_id).second) bad.errors.push_back(where + "duplicate triple");
    }
    if (!bad.errors.empty()) return bad;

    json rows = json::array();
    for (const auto& r : responses) rows.push_back(response_to_json(r));
    const std::string payload =
        json{{"op", "complete"}, {"batch", batch_id}, {"client", client_id}, {"at", now}, {"responses", std::move(rows)}}.dump();
    append(payload);
    apply(payload);
    return {};
}

std::optional<BatchState> BatchService::state(const std::string& batch_id) const {
    std::shared_lock lock(mutex_);
    const Entry* e = find(batch_id);
    if (!e) return std::nullopt;
    return e->state;
}

std::vector<BatchState> BatchService::states() const {
    std::shared_lock lock(mutex_);
    std::vector<BatchState> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.state);
    return out;
}

std::vector<Response> BatchService::responses() const {
    std::shared_lock lock(mutex_);
    return responses_;
}

std::int64_t BatchService::now() const { return clock_(); }

// ---------------------------------------------------------------------------

struct BatchServer::Impl {
    BatchService& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(BatchService& s) : service(s) { install(); }

    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static json state_json(const BatchState& s) {
        json j{{"batch_id", s.batch_id}, {"status", to_string(s.status)}};
        j["reserved_by"] = s.reserved_by ? json(*s.reserved_by) : json(nullptr);
        j["reserved_at"] = s.reserved_at ? json(*s.reserved_at) : json(nullptr);
        j["completed_at"] = s.completed_at ? json(*s.completed_at) : json(nullptr);
        return j;
    }

    static std::optional<json> body_json(const httplib::Request& req, httplib::Response& res) {
        try {
            json j = json::parse(req.body.empty() ? std::string("{}") : req.body);
            if (j.is_object()) return j;
        } catch (const json::exception&) {
        }
        send_json(res, 400, {{"error", "validation"}, {"errors", {"body must be a JSON object"}}});
        return std::nullopt;
    }

    void install() {
        server.Post("/v1/batches/reserve", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = body_json(req, res);
            if (!body) return;
            if (!body->contains("client_id") || !(*body)["client_id"].is_string() || (*body)["client_id"].get<std::string>().empty()) {
                send_json(res, 400, {{"error", "validation"}, {"errors", {"client_id is required"}}});
                return;
            }
            auto r = service.reserve((*body)["client_id"].get<std::string>());
            if (!r) {
                std::int64_t wait = 3600;
                const std::int64_t now = service.now();
                for (const auto& s : service.states()) {
                    if (s.status == BatchStatus::Reserved) {
                        wait = std::min(wait, *s.reserved_at + service.config().lease_seconds() - now + 1);
                    }
                }
                res.status = 204;
                res.set_header("Retry-After", std::to_string(std::max<std::int64_t>(1, wait)));
                return;
            }
            json comments = r->originals;
            for (const auto& c : r->references) comments.push_back(c);
            send_json(res, 200, {{"batch_id", r->batch_id}, {"comment_ids", comments}, {"originals", r->originals},
                                 {"references", r->references}, {"reserved_at", r->reserved_at}, {"expires_at", r->expires_at}});
        });

        server.Post(R"(/v1/batches/([^/]+)/complete)", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = body_json(req, res);
            if (!body) return;
            const std::string id = req.matches[1];
            std::vector<std::string> errors;
            std::string client;
            if (body->contains("client_id") && (*body)["client_id"].is_string()) client = (*body)["client_id"].get<std::string>();
            if (client.empty()) errors.push_back("client_id is required");
            std::vector<Response> rows;
            if (!body->contains("responses") || !(*body)["responses"].is_array()) {
                errors.push_back("responses must be an array");
            } else {
                std::size_t n = 0;
                for (const auto& row : (*body)["responses"]) {
                    ++n;
                    try {
                        rows.push_back(response_from_json(row, client));
                    } catch (const json::exception&) {
                        errors.push_back("row " + std::to_string(n) + ": malformed response object");
                    }
                }
            }
            if (!errors.empty()) {
                send_json(res, 400, {{"error", "validation"}, {"errors", errors}});
                return;
            }
            const auto result = service.complete(id, client, rows);
            switch (result.status) {
                case CompletionStatus::Ok: send_json(res, 200, {{"batch_id", id}, {"status", "completed"}}); break;
                case CompletionStatus::NotFound: send_json(res, 404, {{"error", "not_found"}, {"errors", result.errors}}); break;
                case CompletionStatus::Conflict: send_json(res, 409, {{"error", "conflict"}, {"errors", result.errors}}); break;
                case CompletionStatus::Gone: send_json(res, 410, {{"error", "gone"}, {"errors", result.errors}}); break;
                case CompletionStatus::Invalid: send_json(res, 400, {{"error", "validation"}, {"errors", result.errors}}); break;
            }
        });

        server.Get(R"(/v1/batches/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const auto s = service.state(req.matches[1]);
            if (!s) {
                send_json(res, 404, {{"error", "not_found"}});
                return;
            }
            send_json(res, 200, state_json(*s));
        });

        server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            int counts[3] = {0, 0, 0};
            for (const auto& s : service.states()) ++counts[static_cast<int>(s.status)];
            send_json(res, 200, {{"status", "ok"}, {"available", counts[0]}, {"reserved", counts[1]}, {"completed", counts[2]}});
        });

        server.Get("/v1/admin/sweep", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"requeued", service.sweep_expired()}});
        });

        server.Get("/v1/responses", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(responses_to_csv(service.responses()), "text/csv");
        });

        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const InputError& e) {
                send_json(res, 400, {{"error", "validation"}, {"errors", {e.what()}}});
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", "internal"}, {"errors", {e.what()}}});
            }
        });
    }
};

BatchServer::BatchServer(BatchService& service) : impl_(std::make_unique<Impl>(service)) {}

BatchServer::~BatchServer() { stop(); }

bool BatchServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int BatchServer::start_background(const std::string& host) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port < 0) return -1;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void BatchServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace facet
