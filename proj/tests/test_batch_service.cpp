#include <doctest.h>

#include <httplib.h>
#include <json.hpp>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "facet/batch_service.hpp"
#include "facet/error.hpp"
#include "facet/io.hpp"

using namespace facet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<Batch> batches(int n) {
    std::vector<Batch> out;
    for (int b = 0; b < n; ++b) {
        Batch batch;
        batch.id = "b" + std::to_string(b);
        for (int c = 0; c < 3; ++c) batch.originals.push_back("c" + std::to_string(b) + "_" + std::to_string(c));
        batch.references = {"ref" + std::to_string(b % 2)};
        out.push_back(batch);
    }
    return out;
}

std::vector<Response> ratings_for(const Batch& b, const std::string& rater) {
    std::vector<Response> rows;
    for (const auto& c : b.originals) rows.push_back({c, rater, "item", 1, true, std::nullopt});
    for (const auto& c : b.references) rows.push_back({c, rater, "item", 2, false, 0.5});
    return rows;
}

const Batch& batch_named(const std::vector<Batch>& all, const std::string& id) {
    return *std::find_if(all.begin(), all.end(), [&](const Batch& b) { return b.id == id; });
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("facet-service-" + std::to_string(::getpid()) + "-" + std::to_string(std::rand()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ServiceConfig seeded(std::uint64_t seed) {
    ServiceConfig c;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("reservations are exclusive until exhausted") {
    BatchService service(batches(20), seeded(1));
    std::set<std::string> ids;
    for (int i = 0; i < 20; ++i) {
        const auto r = service.reserve("client" + std::to_string(i));
        REQUIRE(r.has_value());
        CHECK(ids.insert(r->batch_id).second);
        CHECK(r->expires_at - r->reserved_at == 36000);
        CHECK(r->originals.size() == 3);
    }
    CHECK_FALSE(service.reserve("late").has_value());
}

TEST_CASE("completion outcomes") {
    std::int64_t now = 100;
    const auto all = batches(3);
    BatchService service(all, seeded(2), [&now] { return now; });
    const auto r = service.reserve("alice");
    const auto& batch = batch_named(all, r->batch_id);

    const auto before = service.state(r->batch_id);
    CHECK(service.complete(r->batch_id, "mallory", ratings_for(batch, "mallory")).status == CompletionStatus::Conflict);
    CHECK(service.state(r->batch_id) == before);
    CHECK(service.complete("nope", "alice", {}).status == CompletionStatus::NotFound);

    auto stray = ratings_for(batch, "alice");
    stray.push_back({"elsewhere", "alice", "item", 1, std::nullopt, std::nullopt});
    const auto invalid = service.complete(r->batch_id, "alice", stray);
    CHECK(invalid.status == CompletionStatus::Invalid);
    CHECK_FALSE(invalid.errors.empty());
    auto duplicate = ratings_for(batch, "alice");
    duplicate.push_back(duplicate.front());
    CHECK(service.complete(r->batch_id, "alice", duplicate).status == CompletionStatus::Invalid);
    auto negative = ratings_for(batch, "alice");
    negative[0].rating = -1;
    CHECK(service.complete(r->batch_id, "alice", negative).status == CompletionStatus::Invalid);

    now += 50;
    CHECK(service.complete(r->batch_id, "alice", ratings_for(batch, "alice")).status == CompletionStatus::Ok);
    const auto done = service.state(r->batch_id);
    CHECK(done->status == BatchStatus::Completed);
    CHECK(done->completed_at == 150);
    CHECK(service.responses() == ratings_for(batch, "alice"));
    CHECK(service.complete(r->batch_id, "alice", ratings_for(batch, "alice")).status == CompletionStatus::Conflict);
}

TEST_CASE("item ranges are enforced when the instrument is configured") {
    ServiceConfig config = seeded(3);
    ItemSpec item;
    item.id = "item";
    item.num_categories = 2;
    item.steps = {0.0};
    config.items = {item};
    const auto all = batches(1);
    BatchService service(all, config);
    const auto r = service.reserve("a");
    auto rows = ratings_for(all[0], "a");
    CHECK(service.complete(r->batch_id, "a", rows).status == CompletionStatus::Invalid);
    for (auto& row : rows) row.rating = 1;
    CHECK(service.complete(r->batch_id, "a", rows).status == CompletionStatus::Ok);
}

TEST_CASE("leases lapse strictly after the lease length") {
    std::int64_t now = 0;
    const auto all = batches(2);
    BatchService service(all, seeded(4), [&now] { return now; });
    const auto r = service.reserve("slow");
    now = 36000;
    CHECK(service.sweep_expired().empty());
    CHECK(service.complete(r->batch_id, "other", {}).status == CompletionStatus::Conflict);
    now = 36001;
    CHECK(service.sweep_expired() == std::vector<std::string>{r->batch_id});
    CHECK(service.state(r->batch_id)->status == BatchStatus::Available);
    CHECK(service.complete(r->batch_id, "slow", ratings_for(batch_named(all, r->batch_id), "slow")).status == CompletionStatus::Gone);
    CHECK(service.complete(r->batch_id, "someone", {}).status == CompletionStatus::Conflict);

    // Without an explicit sweep, an expired holder still gets Gone and the batch is requeued.
    const auto again = service.reserve("slow2");
    REQUIRE(again.has_value());
    now += 36001;
    CHECK(service.complete(again->batch_id, "slow2", {}).status == CompletionStatus::Gone);
    CHECK(service.state(again->batch_id)->status == BatchStatus::Available);
}

TEST_CASE("a crashed client never blocks a batch for longer than the lease") {
    std::int64_t now = 0;
    BatchService service(batches(1), seeded(5), [&now] { return now; });
    REQUIRE(service.reserve("crashed").has_value());
    now = 100;
    CHECK_FALSE(service.reserve("waiting").has_value());
    now = 36001;
    const auto r = service.reserve("waiting");
    REQUIRE(r.has_value());
    CHECK(r->reserved_at == 36001);
}

TEST_CASE("property: random interleavings keep one live lease and one completion per batch") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::int64_t now = 0;
        const auto all = batches(5);
        BatchService service(all, seeded(static_cast<std::uint64_t>(trial)), [&now] { return now; });
        std::map<std::string, std::string> held;  // client -> batch
        std::map<std::string, int> completions;
        for (int step = 0; step < 300; ++step) {
            const std::string client = "w" + std::to_string(rng() % 8);
            switch (rng() % 4) {
                case 0:
                    if (auto r = service.reserve(client)) held[client] = r->batch_id;
                    break;
                case 1:
                    if (held.count(client)) {
                        const auto id = held[client];
                        if (service.complete(id, client, ratings_for(batch_named(all, id), client)).status == CompletionStatus::Ok) {
                            ++completions[id];
                        }
                        held.erase(client);
                    }
                    break;
                case 2: now += static_cast<std::int64_t>(rng() % 20000); break;
                default: service.sweep_expired(); break;
            }
            std::map<std::string, int> live;
            for (const auto& s : service.states()) {
                if (s.status == BatchStatus::Reserved) {
                    CHECK(s.reserved_by.has_value());
                    ++live[s.batch_id];
                }
            }
            for (const auto& [id, n] : live) CHECK(n == 1);
        }
        for (const auto& [id, n] : completions) CHECK(n == 1);
        CHECK(service.responses().size() == 4 * completions.size());
    }
}

TEST_CASE("restart replays the log and drops a torn tail") {
    TempDir dir;
    std::int64_t now = 1000;
    ServiceConfig config = seeded(7);
    config.store_path = (dir.path / "log").string();
    const auto all = batches(6);
    std::vector<BatchState> before;
    std::vector<Response> rows;
    {
        BatchService service(all, config, [&now] { return now; });
        for (int i = 0; i < 4; ++i) service.reserve("c" + std::to_string(i));
        const auto s = service.states();
        for (const auto& st : s) {
            if (st.status == BatchStatus::Reserved && st.reserved_by == std::optional<std::string>("c0")) {
                service.complete(st.batch_id, "c0", ratings_for(batch_named(all, st.batch_id), "c0"));
            }
        }
        now += 40000;
        service.sweep_expired();
        service.reserve("c9");
        before = service.states();
        rows = service.responses();
    }
    {
        BatchService reopened({}, config, [&now] { return now; });
        CHECK(reopened.states() == before);
        CHECK(reopened.responses() == rows);
        CHECK(reopened.truncated_bytes() == 0);
    }
    {
        std::ofstream torn(config.store_path, std::ios::binary | std::ios::app);
        const char junk[] = {'\x40', 0, 0, 0, 'g', 'a', 'r', 'b', 'a', 'g', 'e'};
        torn.write(junk, sizeof junk);
    }
    BatchService recovered(all, config, [&now] { return now; });
    CHECK(recovered.truncated_bytes() == 11);
    CHECK(recovered.states() == before);
    CHECK(recovered.reserve("after").has_value());

    auto other = batches(7);
    CHECK_THROWS_AS(BatchService(other, config), ConfigError);
}

TEST_CASE("configuration") {
    ServiceConfig config;
    CHECK(config.lease_seconds() == 36000);
    config.lease_hours = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    CHECK(parse_listen_address("0.0.0.0:9000") == std::make_pair(std::string("0.0.0.0"), 9000));
    CHECK_THROWS_AS(parse_listen_address("localhost"), ConfigError);
    CHECK_THROWS_AS(parse_listen_address("host:99999"), ConfigError);

    ::setenv("FACET_LEASE_HOURS", "2.5", 1);
    ::setenv("FACET_LISTEN", "127.0.0.1:9100", 1);
    ServiceConfig env;
    apply_environment(env);
    CHECK(env.lease_hours == 2.5);
    CHECK(env.listen_address == "127.0.0.1:9100");
    ::setenv("FACET_LEASE_HOURS", "soon", 1);
    CHECK_THROWS_AS(apply_environment(env), ConfigError);
    ::unsetenv("FACET_LEASE_HOURS");
    ::unsetenv("FACET_LISTEN");
    CHECK_THROWS_AS(BatchService({}, ServiceConfig{}), ConfigError);
}

TEST_CASE("HTTP front end") {
    std::int64_t now = 5000;
    const auto all = batches(2);
    BatchService service(all, seeded(8), [&now] { return now; });
    BatchServer server(service);
    const int port = server.start_background();
    REQUIRE(port > 0);
    httplib::Client client("127.0.0.1", port);

    auto health = client.Get("/v1/health");
    REQUIRE(health);
    CHECK(json::parse(health->body)["available"] == 2);

    CHECK(client.Post("/v1/batches/reserve", "not json", "application/json")->status == 400);
    CHECK(client.Post("/v1/batches/reserve", R"({"client":"x"})", "application/json")->status == 400);

    auto first = client.Post("/v1/batches/reserve", R"({"client_id":"alice"})", "application/json");
    REQUIRE(first);
    REQUIRE(first->status == 200);
    const auto body = json::parse(first->body);
    const std::string id = body["batch_id"];
    CHECK(body["comment_ids"].size() == 4);
    CHECK(body["expires_at"].get<std::int64_t>() == 5000 + 36000);
    CHECK(client.Post("/v1/batches/reserve", R"({"client_id":"bob"})", "application/json")->status == 200);
    auto none = client.Post("/v1/batches/reserve", R"({"client_id":"carol"})", "application/json");
    CHECK(none->status == 204);
    CHECK(none->get_header_value("Retry-After") == "3600");

    json rows = json::array();
    for (const auto& c : batch_named(all, id).originals) rows.push_back({{"comment_id", c}, {"item_id", "item"}, {"rating", 2}, {"any_identity", true}});
    const std::string path = "/v1/batches/" + id + "/complete";
    CHECK(client.Post(path, json{{"client_id", "bob"}, {"responses", rows}}.dump(), "application/json")->status == 409);
    CHECK(client.Post("/v1/batches/zzz/complete", json{{"client_id", "alice"}, {"responses", rows}}.dump(), "application/json")->status == 404);
    CHECK(client.Post(path, json{{"client_id", "alice"}, {"responses", {{{"item_id", "x"}}}}}.dump(), "application/json")->status == 400);
    CHECK(client.Post(path, json{{"client_id", "alice"}, {"responses", rows}}.dump(), "application/json")->status == 200);

    auto state = client.Get("/v1/batches/" + id);
    CHECK(json::parse(state->body)["status"] == "completed");
    CHECK(client.Get("/v1/batches/zzz")->status == 404);
    auto csv = client.Get("/v1/responses");
    CHECK(responses_from_csv(csv->body).size() == 3);

    now += 36001;
    auto sweep = client.Get("/v1/admin/sweep");
    CHECK(json::parse(sweep->body)["requeued"].size() == 1);
    std::string other_id;
    for (const auto& b : all) {
        if (b.id != id) other_id = b.id;
    }
    CHECK(client.Post("/v1/batches/" + other_id + "/complete", json{{"client_id", "bob"}, {"responses", json::array()}}.dump(),
                      "application/json")->status == 410);
    server.stop();
}
