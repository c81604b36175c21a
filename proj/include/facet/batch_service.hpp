#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "facet/judging_plan.hpp"
#include "facet/types.hpp"

namespace facet {

enum class BatchStatus { Available, Reserved, Completed };

const char* to_string(BatchStatus s);

struct BatchState {
    std::string batch_id;
    BatchStatus status = BatchStatus::Available;
    std::optional<std::string> reserved_by;
    std::optional<std::int64_t> reserved_at;   // seconds since the epoch
    std::optional<std::int64_t> completed_at;

    bool operator==(const BatchState&) const = default;
};

// Seconds since the epoch.
using ServiceClock = std::function<std::int64_t()>;
ServiceClock system_clock();

struct ServiceConfig {
    double lease_hours = 10.0;
    std::string store_path;  // append-only log; empty keeps everything in memory
    std::string listen_address = "127.0.0.1:8080";
    std::optional<std::uint64_t> seed;  // fixed batch choice for tests
    std::vector<ItemSpec> items;        // when set, completion payloads are range-checked

    std::int64_t lease_seconds() const;
    void validate() const;  // throws ConfigError
};

// Reads FACET_LISTEN, FACET_STORE and FACET_LEASE_HOURS into `config`.
void apply_environment(ServiceConfig& config);

struct Reservation {
    std::string batch_id;
    std::vector<std::string> originals;
    std::vector<std::string> references;
    std::int64_t reserved_at = 0;
    std::int64_t expires_at = 0;
};

enum class CompletionStatus { Ok, NotFound, Conflict, Gone, Invalid };

struct CompletionResult {
    CompletionStatus status = CompletionStatus::Ok;
    std::vector<std::string> errors;
};

// Leases batches of a judging plan to clients. Every state change is appended
// to the store before it becomes visible; reopening the store replays it.
class BatchService {
public:
    // With a non-empty store the logged state wins and `batches` may be empty;
    // if both are present their batch ids must agree. Throws ConfigError.
    BatchService(std::vector<Batch> batches, ServiceConfig config, ServiceClock clock = system_clock());
    ~BatchService();

    BatchService(const BatchService&) = delete;
    BatchService& operator=(const BatchService&) = delete;

    std::optional<Reservation> reserve(const std::string& client_id);
    CompletionResult complete(const std::string& batch_id, const std::string& client_id,
                              const std::vector<Response>& responses);
    std::vector<std::string> sweep_expired();
    std::vector<std::string> sweep_expired(std::int64_t now);

    std::optional<BatchState> state(const std::string& batch_id) const;
    std::vector<BatchState> states() const;
    std::vector<Response> responses() const;
    const ServiceConfig& config() const noexcept { return config_; }
    std::int64_t now() const;
    // Bytes dropped from a torn log tail when the store was opened.
    std::uint64_t truncated_bytes() const noexcept { return truncated_bytes_; }

private:
    struct Entry {
        Batch batch;
        BatchState state;
        std::optional<std::string> last_expired_client;  // holder of the most recent lapsed lease
    };

    void replay();
    void append(const std::string& payload);
    void apply(const std::string& payload);
    std::vector<std::string> sweep_locked(std::int64_t now);
    Entry* find(const std::string& batch_id);
    const Entry* find(const std::string& batch_id) const;

    ServiceConfig config_;
    ServiceClock clock_;
    std::vector<Entry> entries_;
    std::vector<Response> responses_;
    std::mt19937_64 rng_;
    std::FILE* log_ = nullptr;
    std::uint64_t truncated_bytes_ = 0;
    mutable std::shared_mutex mutex_;
};

// HTTP/1.1 + JSON front end.
//   POST /v1/batches/reserve         {"client_id"}            200 | 204 + Retry-After
//   POST /v1/batches/{id}/complete   {"client_id","responses"} 200 | 400 | 404 | 409 | 410
//   GET  /v1/batches/{id}, /v1/health, /v1/admin/sweep, /v1/responses (CSV)
class BatchServer {
public:
    explicit BatchServer(BatchService& service);
    ~BatchServer();

    // Blocks until stop(). Returns false when the address cannot be bound.
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and serves on a background thread; returns the port or -1.
    int start_background(const std::string& host = "127.0.0.1");
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Splits "host:port"; throws ConfigError.
std::pair<std::string, int> parse_listen_address(const std::string& address);

}  // namespace facet
