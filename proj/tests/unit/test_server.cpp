#include "test_util.hpp"

#include "peel/server.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

using namespace peel;
using namespace peel::test;
using namespace std::chrono_literals;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

struct Reply {
    unsigned status = 0;
    Json body;
};

class ServerFixture : public ::testing::Test {
protected:
    void SetUp() override { port_ = server_.start(); }
    void TearDown() override { server_.stop(); }

    Reply request(http::verb verb, const std::string& target, const std::string& body = {})
    {
        boost::asio::io_context ioc;
        tcp::socket sock(ioc);
        sock.connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port_));
        http::request<http::string_body> req{verb, "/api/v1" + target, 11};
        req.set(http::field::host, "localhost");
        req.set(http::field::content_type, "application/json");
        req.body() = body;
        req.prepare_payload();
        http::write(sock, req);
        beast::flat_buffer buf;
        http::response_parser<http::string_body> parser;
        parser.body_limit(1u << 30);
        http::read(sock, buf, parser);
        auto res = parser.release();
        beast::error_code ec;
        sock.shutdown(tcp::socket::shutdown_both, ec);
        return {res.result_int(), Json::parse(res.body())};
    }

    std::vector<Json> stream(const std::string& id)
    {
        boost::asio::io_context ioc;
        websocket::stream<tcp::socket> ws(ioc);
        ws.next_layer().connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port_));
        ws.handshake("localhost", "/api/v1/sessions/" + id + "/progress/ws");
        std::vector<Json> out;
        for (;;) {
            beast::flat_buffer buf;
            beast::error_code ec;
            ws.read(buf, ec);
            if (ec) break;
            out.push_back(Json::parse(beast::buffers_to_string(buf.data())));
            if (out.back()["type"] != "progress") break;
        }
        beast::error_code ec;
        ws.close(websocket::close_code::normal, ec);
        return out;
    }

    std::string new_session() { return request(http::verb::post, "/sessions").body["id"].get<std::string>(); }

    SessionManager mgr_;
    HttpServer server_{mgr_, ServerOptions{"127.0.0.1", 0, std::nullopt}};
    unsigned short port_ = 0;
};

} // namespace

TEST_F(ServerFixture, RestFlowOnTheCubeScene)
{
    const auto created = request(http::verb::post, "/sessions");
    EXPECT_EQ(created.status, 201u);
    const std::string id = created.body["id"];

    const auto mesh = request(http::verb::post, "/sessions/" + id + "/mesh", R"({"scene": "cube"})");
    ASSERT_EQ(mesh.status, 200u) << mesh.body.dump();
    EXPECT_GT(mesh.body["tets"].get<int>(), 0);
    const auto rev = mesh.body["revision"].get<std::uint64_t>();

    const auto put = request(http::verb::put, "/sessions/" + id + "/anchors/77",
        Json{{"target", "tet"}, {"id", 0}, {"direction", {0, 0, 1}}, {"revision", rev}}.dump());
    ASSERT_EQ(put.status, 200u) << put.body.dump();
    const auto rev2 = put.body["revision"].get<std::uint64_t>();
    EXPECT_EQ(rev2, rev + 1);

    const auto anchors = request(http::verb::get, "/sessions/" + id + "/anchors");
    EXPECT_EQ(anchors.body["revision"], rev2);
    EXPECT_EQ(anchors.body["anchors"].size(), 2u);

    const auto solve = request(http::verb::post, "/sessions/" + id + "/solve",
        Json{{"config", {{"layer_count", 3}}}, {"revision", rev2}}.dump());
    ASSERT_EQ(solve.status, 202u) << solve.body.dump();
    ASSERT_TRUE(mgr_.wait_idle(id, 30s));

    const auto info = request(http::verb::get, "/sessions/" + id);
    EXPECT_EQ(info.body["state"], "DONE");
    const auto layers = request(http::verb::get, "/sessions/" + id + "/layers");
    EXPECT_EQ(layers.status, 200u);
    EXPECT_EQ(layers.body["layers"].size(), 3u);
    const auto subset = request(http::verb::get, "/sessions/" + id + "/layers?first=1&last=1");
    EXPECT_EQ(subset.body["layers"].size(), 1u);
    const auto field = request(http::verb::get, "/sessions/" + id + "/field?max=5");
    EXPECT_LE(field.body["tets"].size(), 5u);
    const auto reports = request(http::verb::get, "/sessions/" + id + "/reports");
    EXPECT_TRUE(reports.body["valid"].get<bool>());
    const auto poll = request(http::verb::get, "/sessions/" + id + "/progress?since=0");
    EXPECT_TRUE(poll.body["finished"].get<bool>());
    EXPECT_FALSE(poll.body["events"].empty());

    const auto del = request(http::verb::delete_, "/sessions/" + id + "/anchors/77");
    EXPECT_EQ(del.status, 200u);
}

TEST_F(ServerFixture, ErrorCodes)
{
    EXPECT_EQ(request(http::verb::get, "/sessions/nope").status, 404u);
    EXPECT_EQ(request(http::verb::get, "/sessions/nope").body["error"], "SessionNotFound");
    EXPECT_EQ(request(http::verb::get, "/elsewhere").status, 404u);
    const std::string id = new_session();
    EXPECT_EQ(request(http::verb::post, "/sessions/" + id + "/mesh", "{broken").status, 400u);
    EXPECT_EQ(request(http::verb::post, "/sessions/" + id + "/mesh", R"({"scene": "teapot"})").status, 400u);
    EXPECT_EQ(request(http::verb::put, "/sessions/" + id + "/anchors/x", "{}").status, 400u);
    EXPECT_EQ(request(http::verb::get, "/sessions/" + id + "/layers").status, 400u);
    EXPECT_EQ(request(http::verb::patch, "/sessions/" + id + "/solve").status, 405u);

    ASSERT_EQ(request(http::verb::post, "/sessions/" + id + "/mesh", R"({"scene": "conflict", "resolution": 0.5})").status,
        200u);
    const auto rev = mgr_.info(id).revision;
    const auto stale = request(http::verb::post, "/sessions/" + id + "/solve", Json{{"revision", rev + 5}}.dump());
    EXPECT_EQ(stale.status, 409u);
    EXPECT_EQ(stale.body["error"], "StaleRevision");
    const auto bad_cfg = request(http::verb::post, "/sessions/" + id + "/solve", R"({"config": {"strategy": "NOPE"}})");
    EXPECT_EQ(bad_cfg.status, 400u);

    ASSERT_EQ(request(http::verb::post, "/sessions/" + id + "/solve", "{}").status, 202u);
    const auto busy = request(http::verb::post, "/sessions/" + id + "/solve", "{}");
    if (mgr_.info(id).state == JobState::Running) {
        EXPECT_EQ(busy.status, 409u);
        EXPECT_EQ(busy.body["error"], "JobAlreadyRunning");
    }
    mgr_.wait_idle(id, 60s);
}

TEST_F(ServerFixture, PayloadLimitIs413)
{
    SessionManager small(64);
    HttpServer srv(small, ServerOptions{"127.0.0.1", 0, std::nullopt});
    const auto port = srv.start();
    const std::string id = small.create_session();
    boost::asio::io_context ioc;
    tcp::socket sock(ioc);
    sock.connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port));
    http::request<http::string_body> req{http::verb::post, "/api/v1/sessions/" + id + "/mesh", 11};
    req.body() = Json{{"vtk", std::string(200, 'x')}}.dump();
    req.prepare_payload();
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    EXPECT_EQ(res.result_int(), 413u);
    srv.stop();
}

TEST_F(ServerFixture, WebSocketStreamMatchesTheCommittedReport)
{
    const std::string id = new_session();
    ASSERT_EQ(request(http::verb::post, "/sessions/" + id + "/mesh", R"({"scene": "conflict", "resolution": 0.3})").status,
        200u);
    ASSERT_EQ(request(http::verb::post, "/sessions/" + id + "/solve", "{}").status, 202u);
    const auto msgs = stream(id);
    ASSERT_FALSE(msgs.empty());
    EXPECT_EQ(msgs.back()["type"], "end");
    EXPECT_EQ(msgs.back()["state"], "DONE");

    const auto reports = request(http::verb::get, "/sessions/" + id + "/reports").body;
    const std::string last_round = "round " + std::to_string(reports["curl_rounds"].get<int>());
    std::vector<double> streamed;
    for (std::size_t i = 0; i + 1 < msgs.size(); ++i) {
        EXPECT_EQ(msgs[i]["seq"], i);
        if (msgs[i]["stage"] == "curl" && msgs[i]["message"] == last_round) streamed.push_back(msgs[i]["i_rot"]);
    }
    EXPECT_FALSE(streamed.empty());
    EXPECT_EQ(streamed, reports["curl"]["i_rot_history"].get<std::vector<double>>());
}
