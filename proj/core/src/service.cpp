#include "deepbow/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "deepbow/error.hpp"

namespace deepbow {

namespace {

nlohmann::json error_json(ErrorCode code, const std::string& message)
{
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

std::optional<std::string> string_field(const nlohmann::json& req, const char* key)
{
    if (!req.contains(key)) {
        return std::nullopt;
    }
    if (!req[key].is_string()) {
        throw Error(ErrorCode::protocol, std::string("field '") + key + "' must be a string");
    }
    return req[key].get<std::string>();
}

}  // namespace

Service::Service(ServiceResources resources) : r_(std::move(resources))
{
    if ((r_.model == nullptr) != (r_.vocab == nullptr)) {
        throw Error(ErrorCode::config, "a model needs its vocabulary and vice versa");
    }
    if (r_.model != nullptr && r_.model->vocab_hash != r_.vocab->hash()) {
        throw Error(ErrorCode::config, "model and vocabulary do not match");
    }
    for (const auto* store : {r_.queries, r_.products}) {
        if (store == nullptr) {
            continue;
        }
        if (r_.vocab != nullptr && store->metadata().vocab_hash != r_.vocab->hash()) {
            throw Error(ErrorCode::config, std::string(to_string(store->metadata().side))
                                               + " store was built with a different vocabulary");
        }
    }
    if (r_.queries != nullptr && r_.products != nullptr
        && r_.queries->metadata().vocab_hash != r_.products->metadata().vocab_hash) {
        throw Error(ErrorCode::config, "query and product stores disagree on the vocabulary");
    }
    if (r_.queries != nullptr && r_.queries->metadata().side != Side::query) {
        throw Error(ErrorCode::config, "query store holds product representations");
    }
    if (r_.products != nullptr && r_.products->metadata().side != Side::product) {
        throw Error(ErrorCode::config, "product store holds query representations");
    }
}

ScoreMode Service::request_mode(const nlohmann::json& request) const
{
    if (auto m = string_field(request, "mode")) {
        try {
            return parse_score_mode(*m);
        } catch (const Error& e) {
            throw Error(ErrorCode::protocol, e.what());
        }
    }
    return r_.queries != nullptr ? r_.queries->metadata().mode : r_.config.train.mode;
}

SparseBoW Service::resolve(const nlohmann::json& request, Side side, ScoreMode mode) const
{
    const bool query = side == Side::query;
    const auto id = string_field(request, query ? "qid" : "pid");
    const auto text = string_field(request, query ? "qtext" : "ptext");
    if (!id && !text) {
        throw Error(ErrorCode::protocol, std::string("request needs ") + (query ? "qid or qtext" : "pid or ptext"));
    }
    const BoWStore* store = query ? r_.queries : r_.products;
    if (id && store != nullptr) {
        if (const auto* bow = store->find(*id)) {
            if (query && store->metadata().mode != mode) {
                throw Error(ErrorCode::protocol, "query store was built for mode "
                                                     + std::string(to_string(store->metadata().mode)));
            }
            return *bow;
        }
    }
    if (r_.model == nullptr) {
        if (id) {
            throw Error(ErrorCode::not_found, "unknown " + std::string(to_string(side)) + " id '" + *id + "'");
        }
        throw Error(ErrorCode::not_found, "no model loaded to encode text");
    }
    const auto& policy = store != nullptr ? store->metadata().truncation : r_.config.truncation(side);
    auto bow = represent(*r_.model, *r_.vocab, text ? *text : *id, side, mode, policy);
    if (!bow) {
        throw Error(ErrorCode::input, std::string(to_string(side)) + " text has no tokens");
    }
    return std::move(*bow);
}

nlohmann::json Service::handle(const nlohmann::json& request) const
{
    try {
        if (!request.is_object()) {
            throw Error(ErrorCode::protocol, "request must be a JSON object");
        }
        const auto op = string_field(request, "op");
        if (!op) {
            throw Error(ErrorCode::protocol, "missing 'op'");
        }
        if (*op == "score" || *op == "explain") {
            const auto mode = request_mode(request);
            const auto q = resolve(request, Side::query, mode);
            const auto p = resolve(request, Side::product, mode);
            if (*op == "score") {
                const double s = score(q, p, mode);
                return {{"score", s}, {"decision", s >= r_.config.serve.threshold ? "good" : "bad"}};
            }
            const auto ex = explain(q, p, r_.vocab, mode);
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& m : ex.matches) {
                rows.push_back({{"index", m.index}, {"term", m.term}, {"p", m.p}, {"g", m.g}, {"pg", m.pg}});
            }
            return {{"matches", rows}, {"total", ex.total}};
        }
        if (*op == "encode") {
            const auto text = string_field(request, "text");
            if (!text) {
                throw Error(ErrorCode::protocol, "encode needs 'text'");
            }
            Side side = Side::product;
            if (auto s = string_field(request, "side")) {
                try {
                    side = parse_side(*s);
                } catch (const Error& e) {
                    throw Error(ErrorCode::protocol, e.what());
                }
            }
            const auto mode = request_mode(request);
            nlohmann::json fake = {{side == Side::query ? "qtext" : "ptext", *text}};
            const auto bow = resolve(fake, side, mode);
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& e : bow.entries) {
                entries.push_back({{"index", e.index}, {"term", r_.vocab->surface(e.index)}, {"weight", e.weight}});
            }
            return {{"side", std::string(to_string(side))}, {"entries", entries}};
        }
        throw Error(ErrorCode::protocol, "unknown op '" + *op + "'");
    } catch (const Error& e) {
        return error_json(e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
        return error_json(ErrorCode::protocol, e.what());
    }
}

std::string Service::handle_line(std::string_view line) const
{
    nlohmann::json request;
    try {
        request = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        return error_json(ErrorCode::protocol, std::string("malformed JSON: ") + e.what()).dump();
    }
    return handle(request).dump();
}

// ---------------------------------------------------------------------------
// TCP

Server::Server(const Service& service) : service_(service) {}

Server::~Server()
{
    stop();
}

std::uint16_t Server::listen(const std::string& host, std::uint16_t port)
{
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw Error(ErrorCode::io, std::string("socket: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw Error(ErrorCode::config, "bad listen address '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0
        || ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    return port_;
}

void Server::run()
{
    while (!stopping_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (stopping_) {
                break;
            }
            if (errno == EINTR) {
                continue;
            }
            spdlog::error("accept: {}", std::strerror(errno));
            break;
        }
        std::lock_guard lock(mutex_);
        client_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void Server::interrupt() noexcept
{
    stopping_ = true;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
    }
}

void Server::stop()
{
    if (stopped_) {
        return;
    }
    stopped_ = true;
    interrupt();
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        for (int fd : client_fds_) {
            ::shutdown(fd, SHUT_RDWR);
        }
        workers.swap(workers_);
    }
    for (auto& w : workers) {
        w.join();
    }
}

void Server::serve_connection(int fd)
{
    std::string buffer;
    char chunk[4096];
    for (;;) {
        const auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) {
            break;
        }
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty()) {
                continue;
            }
            const auto reply = service_.handle_line(line) + "\n";
            std::size_t sent = 0;
            while (sent < reply.size()) {
                const auto w = ::send(fd, reply.data() + sent, reply.size() - sent, MSG_NOSIGNAL);
                if (w <= 0) {
                    buffer.clear();
                    goto done;
                }
                sent += static_cast<std::size_t>(w);
            }
        }
    }
done:
    std::lock_guard lock(mutex_);
    client_fds_.erase(std::remove(client_fds_.begin(), client_fds_.end(), fd), client_fds_.end());
    ::close(fd);
}

}  // namespace deepbow
