#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepbow/config.hpp"
#include "deepbow/store.hpp"

namespace deepbow {

/// Artifacts a service answers from. Every pointer may be null; the service
/// does not own them and they must outlive it.
struct ServiceResources {
    const BoWStore* queries = nullptr;
    const BoWStore* products = nullptr;
    const DeepBowModel* model = nullptr;
    const Vocabulary* vocab = nullptr;
    AppConfig config;
};

/// Request handler for the line protocol, one JSON object per request:
///
///   {"op":"score","mode":"q_synonym","qid":"q1","pid":"p9"}
///   {"op":"explain","qtext":"red dress","pid":"p9"}
///   {"op":"encode","text":"red dress","side":"product"}
///
/// Ids are looked up in the stores; an unknown id (or a *text field) is
/// encoded on the fly when a model is loaded. Failures come back as
/// {"error":{"code":...,"message":...}}.
class Service {
public:
    explicit Service(ServiceResources resources);

    [[nodiscard]] nlohmann::json handle(const nlohmann::json& request) const;
    [[nodiscard]] std::string handle_line(std::string_view line) const;

private:
    SparseBoW resolve(const nlohmann::json& request, Side side, ScoreMode mode) const;
    [[nodiscard]] ScoreMode request_mode(const nlohmann::json& request) const;

    ServiceResources r_;
};

/// Newline-delimited JSON over TCP, one thread per connection.
class Server {
public:
    explicit Server(const Service& service);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and listens; port 0 picks a free port. Returns the bound port.
    std::uint16_t listen(const std::string& host, std::uint16_t port);
    /// Accept loop; returns after stop().
    void run();
    /// Stops accepting, closes client connections and joins their threads.
    void stop();
    /// Async-signal-safe: only makes run() return.
    void interrupt() noexcept;
    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }

private:
    void serve_connection(int fd);

    const Service& service_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    bool stopped_ = false;
    std::mutex mutex_;
    std::vector<std::thread> workers_;
    std::vector<int> client_fds_;
};

}  // namespace deepbow
