#include "peel/server.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <charconv>
#include <fstream>
#include <list>
#include <sstream>
#include <sys/socket.h>

namespace peel {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

constexpr std::string_view kApiPrefix = "/api/v1";

struct Target {
    std::vector<std::string> segments; ///< path below the api prefix
    std::map<std::string, std::string> query;
};

std::optional<Target> parse_target(std::string_view target)
{
    Target t;
    const auto qpos = target.find('?');
    std::string_view path = target.substr(0, qpos);
    if (!path.starts_with(kApiPrefix)) return std::nullopt;
    path.remove_prefix(kApiPrefix.size());
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto end = std::min(path.find('/', start), path.size());
        if (end > start) t.segments.emplace_back(path.substr(start, end - start));
        start = end + 1;
    }
    if (qpos != std::string_view::npos) {
        std::string_view q = target.substr(qpos + 1);
        while (!q.empty()) {
            const auto amp = std::min(q.find('&'), q.size());
            const std::string_view kv = q.substr(0, amp);
            const auto eq = kv.find('=');
            if (eq == std::string_view::npos)
                t.query[std::string(kv)] = "";
            else
                t.query[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
            q.remove_prefix(std::min(amp + 1, q.size()));
        }
    }
    return t;
}

template <class T>
std::optional<T> query_number(const Target& t, const std::string& key)
{
    const auto it = t.query.find(key);
    if (it == t.query.end()) return std::nullopt;
    T v{};
    const auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (res.ec != std::errc() || res.ptr != it->second.data() + it->second.size())
        throw Error(ErrorCode::ParseError, "query parameter '" + key + "' is not a number");
    return v;
}

std::int64_t parse_id(const std::string& s)
{
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "anchor id '" + s + "' is not an integer");
    return v;
}

ApiResponse json_response(unsigned status, const Json& j)
{
    return {status, j.dump(), "application/json"};
}

ApiResponse error_response(unsigned status, std::string_view code, const std::string& message)
{
    return json_response(status, {{"error", code}, {"message", message}});
}

unsigned status_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::SessionNotFound: return 404;
    case ErrorCode::JobAlreadyRunning:
    case ErrorCode::StaleRevision: return 409;
    case ErrorCode::ParseError:
    case ErrorCode::InvalidArgument: return 400;
    default: return 422;
    }
}

Json parse_body(std::string_view body)
{
    if (body.empty()) return Json::object();
    try {
        return Json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
}

std::optional<std::uint64_t> take_revision(Json& j)
{
    if (!j.is_object() || !j.contains("revision")) return std::nullopt;
    const auto r = j["revision"];
    j.erase("revision");
    if (r.is_null()) return std::nullopt;
    if (!r.is_number_unsigned()) throw Error(ErrorCode::ParseError, "'revision' must be a non-negative integer");
    return r.get<std::uint64_t>();
}

ApiResponse route(SessionManager& mgr, std::string_view method, const Target& t, std::string_view body)
{
    const auto& seg = t.segments;
    if (seg.empty() || seg[0] != "sessions") return error_response(404, "NotFound", "unknown resource");
    if (seg.size() == 1) {
        if (method != "POST") return error_response(405, "MethodNotAllowed", "use POST");
        return json_response(201, {{"id", mgr.create_session()}});
    }
    const std::string& id = seg[1];
    if (seg.size() == 2) {
        if (method != "GET") return error_response(405, "MethodNotAllowed", "use GET");
        return json_response(200, to_json(mgr.info(id)));
    }
    const std::string& what = seg[2];

    if (what == "mesh" && seg.size() == 3) {
        if (method != "POST") return error_response(405, "MethodNotAllowed", "use POST");
        if (body.size() > mgr.max_payload()) return error_response(413, "PayloadTooLarge", "mesh payload too large");
        const Json j = parse_body(body);
        MeshSummary m;
        if (j.contains("vtk")) {
            std::optional<std::string> tags;
            if (j.contains("tags")) tags = j["tags"].get<std::string>();
            m = mgr.upload_mesh(id, j["vtk"].get<std::string>(),
                tags ? std::optional<std::string_view>(*tags) : std::nullopt);
        } else if (j.contains("scene")) {
            m = mgr.load_scene(id, j["scene"].get<std::string>(), j.value("resolution", 1.0));
        } else if (j.contains("path")) {
            m = mgr.load_mesh_file(id, j["path"].get<std::string>());
        } else {
            throw Error(ErrorCode::ParseError, "mesh body needs 'vtk', 'scene' or 'path'");
        }
        Json out = to_json(m);
        out["revision"] = mgr.info(id).revision;
        return json_response(200, out);
    }

    if (what == "anchors") {
        if (seg.size() == 3) {
            if (method != "GET") return error_response(405, "MethodNotAllowed", "use GET");
            Json list = Json::array();
            for (const auto& [k, a] : mgr.anchors(id)) {
                Json e = to_json(a);
                e["anchor_id"] = k;
                list.push_back(e);
            }
            return json_response(200, {{"revision", mgr.info(id).revision}, {"anchors", list}});
        }
        if (seg.size() != 4) return error_response(404, "NotFound", "unknown resource");
        const std::int64_t aid = parse_id(seg[3]);
        if (method == "PUT") {
            Json j = parse_body(body);
            const auto expected = take_revision(j);
            const auto rev = mgr.put_anchor(id, aid, anchor_spec_from_json(j), expected);
            return json_response(200, {{"revision", rev}, {"pending", mgr.info(id).pending_edits}});
        }
        if (method == "DELETE") {
            const auto rev = mgr.delete_anchor(id, aid, query_number<std::uint64_t>(t, "revision"));
            return json_response(200, {{"revision", rev}, {"pending", mgr.info(id).pending_edits}});
        }
        return error_response(405, "MethodNotAllowed", "use PUT or DELETE");
    }

    if (what == "solve" && seg.size() == 3) {
        if (method != "POST") return error_response(405, "MethodNotAllowed", "use POST");
        Json j = parse_body(body);
        const auto expected = take_revision(j);
        PlanConfig cfg;
        if (j.contains("config")) cfg = plan_config_from_json(j["config"]);
        const auto job = mgr.start_solve(id, cfg, expected);
        return json_response(202, {{"job", job}});
    }

    if (what == "progress" && seg.size() == 3) {
        if (method != "GET") return error_response(405, "MethodNotAllowed", "use GET");
        const auto since = query_number<std::size_t>(t, "since").value_or(0);
        const auto wait = query_number<int>(t, "wait_ms").value_or(0);
        const ProgressPage page = mgr.progress(id, since, std::chrono::milliseconds(std::clamp(wait, 0, 30000)));
        Json events = Json::array();
        for (std::size_t i = 0; i < page.events.size(); ++i) events.push_back(to_json(page.events[i], page.job, since + i));
        return json_response(200,
            {{"job", page.job}, {"state", to_string(page.state)}, {"finished", page.finished}, {"events", events}});
    }

    if (method != "GET") return error_response(405, "MethodNotAllowed", "use GET");
    if (what == "layers" && seg.size() == 3) {
        const auto first = query_number<std::size_t>(t, "first").value_or(0);
        const auto last = query_number<std::size_t>(t, "last").value_or(std::numeric_limits<std::size_t>::max());
        return {200, mgr.get_layers(id, first, last), "application/json"};
    }
    if (what == "field" && seg.size() == 3)
        return {200, mgr.get_field_sample(id, query_number<std::size_t>(t, "max").value_or(5000)), "application/json"};
    if (what == "reports" && seg.size() == 3) return {200, mgr.get_reports(id), "application/json"};
    return error_response(404, "NotFound", "unknown resource");
}

std::string_view mime_type(const std::filesystem::path& p)
{
    const auto ext = p.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js" || ext == ".mjs") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    return "application/octet-stream";
}

ApiResponse serve_static(const std::filesystem::path& root, std::string_view target)
{
    std::string path(target.substr(0, target.find('?')));
    if (path.find("..") != std::string::npos) return error_response(400, "BadPath", "invalid path");
    if (path.empty() || path == "/") path = "/index.html";
    const auto file = root / path.substr(1);
    std::ifstream in(file, std::ios::binary);
    if (!in) return error_response(404, "NotFound", "no such file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return {200, ss.str(), std::string(mime_type(file))};
}

} // namespace

ApiResponse handle_api(SessionManager& mgr, std::string_view method, std::string_view target, std::string_view body)
{
    const auto t = parse_target(target);
    if (!t) return error_response(404, "NotFound", "not an api path");
    try {
        return route(mgr, method, *t, body);
    } catch (const Error& e) {
        return error_response(status_for(e.code()), to_string(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, "ParseError", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

struct HttpServer::Impl {
    SessionManager& mgr;
    ServerOptions options;
    asio::io_context ioc;
    std::optional<tcp::acceptor> acceptor;
    std::thread accept_thread;
    std::atomic<bool> stopping{false};

    struct Connection {
        std::thread thread;
        int fd = -1;
        std::atomic<bool> done{false};
    };
    std::mutex conn_mutex;
    std::list<std::unique_ptr<Connection>> connections;
    std::mutex stop_mutex;
    std::condition_variable stop_cv;
    bool stopped = false;

    Impl(SessionManager& m, ServerOptions o) : mgr(m), options(std::move(o)) {}

    void prune()
    {
        std::lock_guard lock(conn_mutex);
        for (auto it = connections.begin(); it != connections.end();) {
            if ((*it)->done) {
                (*it)->thread.join();
                it = connections.erase(it);
            } else {
                ++it;
            }
        }
    }

    void accept_loop()
    {
        while (!stopping) {
            tcp::socket sock(ioc);
            beast::error_code ec;
            acceptor->accept(sock, ec);
            if (stopping) break;
            if (ec) continue;
            prune();
            auto conn = std::make_unique<Connection>();
            conn->fd = sock.native_handle();
            Connection* raw = conn.get();
            std::lock_guard lock(conn_mutex);
            conn->thread = std::thread([this, raw, s = std::move(sock)]() mutable {
                serve(std::move(s));
                raw->done = true;
            });
            connections.push_back(std::move(conn));
        }
    }

    void stream_progress(tcp::socket sock, const http::request<http::string_body>& req, const std::string& id,
        std::size_t since)
    {
        websocket::stream<tcp::socket> ws(std::move(sock));
        beast::error_code ec;
        ws.accept(req, ec);
        if (ec) return;
        ws.text(true);
        while (!stopping) {
            ProgressPage page;
            try {
                page = mgr.progress(id, since, std::chrono::milliseconds(250));
            } catch (const std::exception& e) {
                ws.write(asio::buffer(Json{{"type", "error"}, {"message", e.what()}}.dump()), ec);
                break;
            }
            for (const auto& e : page.events) {
                ws.write(asio::buffer(to_json(e, page.job, since++).dump()), ec);
                if (ec) return;
            }
            if (page.finished) {
                ws.write(asio::buffer(Json{{"type", "end"}, {"job", page.job}, {"state", to_string(page.state)},
                                          {"events", since}}
                                          .dump()),
                    ec);
                break;
            }
        }
        ws.close(websocket::close_code::normal, ec);
    }

    void serve(tcp::socket sock)
    {
        beast::flat_buffer buffer;
        beast::error_code ec;
        while (!stopping) {
            http::request_parser<http::string_body> parser;
            parser.body_limit(mgr.max_payload() + (std::size_t{1} << 20));
            http::read(sock, buffer, parser, ec);
            if (ec == http::error::body_limit) {
                http::response<http::string_body> res{http::status::payload_too_large, 11};
                res.set(http::field::content_type, "application/json");
                res.body() = Json{{"error", "PayloadTooLarge"}, {"message", "request body too large"}}.dump();
                res.prepare_payload();
                http::write(sock, res, ec);
                break;
            }
            if (ec) break;
            auto req = parser.release();
            const std::string target(req.target());

            if (websocket::is_upgrade(req)) {
                const auto t = parse_target(target);
                if (t && t->segments.size() == 4 && t->segments[0] == "sessions" && t->segments[2] == "progress"
                    && t->segments[3] == "ws") {
                    std::size_t since = 0;
                    try {
                        mgr.info(t->segments[1]);
                        since = query_number<std::size_t>(*t, "since").value_or(0);
                    } catch (const Error& e) {
                        respond(sock, req, error_response(status_for(e.code()), to_string(e.code()), e.what()), ec);
                        break;
                    }
                    stream_progress(std::move(sock), req, t->segments[1], since);
                    return;
                }
                respond(sock, req, error_response(404, "NotFound", "no websocket at this path"), ec);
                break;
            }

            ApiResponse r;
            if (target.starts_with(kApiPrefix))
                r = handle_api(mgr, std::string_view(req.method_string().data(), req.method_string().size()),
                    target, req.body());
            else if (options.ui_dir && req.method() == http::verb::get)
                r = serve_static(*options.ui_dir, target);
            else
                r = error_response(404, "NotFound", "unknown resource");
            respond(sock, req, r, ec);
            if (ec || !req.keep_alive()) break;
        }
        sock.shutdown(tcp::socket::shutdown_both, ec);
    }

    static void respond(tcp::socket& sock, const http::request<http::string_body>& req, const ApiResponse& r,
        beast::error_code& ec)
    {
        http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
        res.set(http::field::content_type, r.content_type);
        res.set(http::field::access_control_allow_origin, "*");
        res.keep_alive(req.keep_alive());
        res.body() = r.body;
        res.prepare_payload();
        http::write(sock, res, ec);
    }
};

HttpServer::HttpServer(SessionManager& mgr, ServerOptions options)
    : impl_(std::make_unique<Impl>(mgr, std::move(options)))
{}

HttpServer::~HttpServer()
{
    stop();
}

unsigned short HttpServer::start()
{
    auto& d = *impl_;
    const auto address = asio::ip::make_address(d.options.address);
    d.acceptor.emplace(d.ioc);
    const tcp::endpoint ep(address, d.options.port);
    try {
        d.acceptor->open(ep.protocol());
        d.acceptor->set_option(asio::socket_base::reuse_address(true));
        d.acceptor->bind(ep);
        d.acceptor->listen();
    } catch (const std::exception& e) {
        throw Error(ErrorCode::IoError, "cannot listen on " + d.options.address + ":"
                + std::to_string(d.options.port) + ": " + e.what());
    }
    port_ = d.acceptor->local_endpoint().port();
    d.accept_thread = std::thread([&d] { d.accept_loop(); });
    log::info("serving on http://" + d.options.address + ":" + std::to_string(port_));
    return port_;
}

void HttpServer::stop()
{
    auto& d = *impl_;
    if (d.stopping.exchange(true)) return;
    if (d.accept_thread.joinable()) {
        // Wake the blocking accept with a throwaway connection.
        beast::error_code ec;
        tcp::socket wake(d.ioc);
        wake.connect(tcp::endpoint(d.acceptor->local_endpoint().address(), port_), ec);
        d.accept_thread.join();
        d.acceptor->close(ec);
    }
    {
        std::lock_guard lock(d.conn_mutex);
        for (auto& c : d.connections)
            if (!c->done) ::shutdown(c->fd, SHUT_RDWR);
    }
    for (auto& c : d.connections) c->thread.join();
    d.connections.clear();
    {
        std::lock_guard lock(d.stop_mutex);
        d.stopped = true;
    }
    d.stop_cv.notify_all();
}

void HttpServer::wait()
{
    auto& d = *impl_;
    std::unique_lock lock(d.stop_mutex);
    d.stop_cv.wait(lock, [&] { return d.stopped; });
}

} // namespace peel
