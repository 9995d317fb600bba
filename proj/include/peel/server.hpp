#pragma once

#include "peel/service.hpp"

#include <atomic>

namespace peel {

struct ApiResponse {
    unsigned status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Routes one request under /api/v1 (no sockets involved):
///   POST   /sessions                      -> {id}
///   GET    /sessions/{id}                 -> session info
///   POST   /sessions/{id}/mesh            {vtk, tags?} | {scene, resolution?} | {path}
///   GET    /sessions/{id}/anchors
///   PUT    /sessions/{id}/anchors/{aid}   anchor [+ revision]
///   DELETE /sessions/{id}/anchors/{aid}[?revision=r]
///   POST   /sessions/{id}/solve           {config?, revision?}
///   GET    /sessions/{id}/progress?since=k[&wait_ms=t]   polling fallback
///   GET    /sessions/{id}/layers[?first=a&last=b]
///   GET    /sessions/{id}/field[?max=n]
///   GET    /sessions/{id}/reports
/// The WebSocket stream lives at GET /sessions/{id}/progress/ws.
ApiResponse handle_api(SessionManager& mgr, std::string_view method, std::string_view target, std::string_view body);

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080; ///< 0 picks a free port
    std::optional<std::filesystem::path> ui_dir; ///< static files served outside /api
};

/// HTTP/1.1 + WebSocket front of a SessionManager, one thread per connection.
class HttpServer {
public:
    HttpServer(SessionManager& mgr, ServerOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and starts accepting on a background thread; returns the bound port.
    unsigned short start();
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();
    unsigned short port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    unsigned short port_ = 0;
};

} // namespace peel
