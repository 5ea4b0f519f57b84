#pragma once

// HTTP + WebSocket front end for SessionManager.
//
//   GET  /health                 liveness and version
//   POST /sessions               create from a scenario body
//   GET  /sessions               list open sessions
//   GET  /sessions/:id/export    trajectory CSV
//   WS   /sessions/:id/stream    act/state message channel
//
// Message schema: docs/wire-protocol.md.

#include "pumpsched/service/session.hpp"

#include <memory>
#include <string>

namespace pumpsched::service {

class Server {
public:
    // Binds immediately; throws std::runtime_error when the port is taken.
    // Port 0 picks a free port.
    Server(SessionManager& manager, const std::string& address, unsigned short port, int threads = 2);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const noexcept;

    // Serves on background threads.
    void start();
    // Blocks until stop() or SIGINT/SIGTERM.
    void run_until_signal();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace pumpsched::service
