#pragma once

// HTTP+JSON session service. Routes are documented in docs/http_api.md.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stagehand/backend.hpp"
#include "stagehand/engine.hpp"
#include "stagehand/storage.hpp"

namespace stagehand {

// Called once per session (on creation and when a stored session is loaded).
using BackendFactory = std::function<std::shared_ptr<CompletionBackend>(const Session&)>;

struct ServiceConfig {
    std::filesystem::path data_dir = "data";
    EngineOptions engine;
};

class SessionService {
public:
    SessionService(ServiceConfig config, BackendFactory backends);
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    // Binds (port 0 picks a free port) and serves on a background thread.
    // Returns the bound port.
    int start(const std::string& host, int port);
    // Binds and serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();

    // Files that failed to load at startup (already quarantined).
    const std::vector<Storage::LoadError>& load_errors() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// "host:port" -> {host, port}; DL_BIND_ADDR format.
std::pair<std::string, int> parse_bind_address(const std::string& addr);

}  // namespace stagehand
