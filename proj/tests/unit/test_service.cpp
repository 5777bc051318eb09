#include "../support/builders.hpp"

#include <wayfinder/service.hpp>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>
#include <httplib.h>

#include <chrono>
#include <future>

namespace wayfinder {
namespace {

using namespace wayfinder::testing;
using nlohmann::json;

const std::map<std::string, Caller> kTokens = {
    {"admin-token", Caller{Role::admin, ""}},
    {"lead-token", Caller{Role::test_lead, "lead"}},
    {"t1-token", Caller{Role::tester, "t1"}},
    {"t2-token", Caller{Role::tester, "t2"}},
};

class ApiTest : public ::testing::Test {
protected:
    Engine engine{EngineConfig{}};
    Api api{engine, kTokens};

    ApiResponse call(const std::string& method, const std::string& path, const std::string& token,
                     const json& body = nullptr, std::map<std::string, std::string> query = {}) {
        ApiRequest r;
        r.method = method;
        r.path = path;
        r.query = std::move(query);
        r.authorization = token.empty() ? "" : "Bearer " + token;
        r.content_type = "application/json";
        r.body = body.is_null() ? "" : body.dump();
        return api.handle(r);
    }

    void seed_page() {
        ASSERT_EQ(call("POST", "/events", "t1-token", event_to_json(session_start("t1", "s1", 0))).status, 200);
        auto pv = page_view("t1", "s1", 10, "/a", {link("home"), input("f.q", "f"), action("f.go", "f", "Go")});
        ASSERT_EQ(call("POST", "/events", "t1-token", event_to_json(pv)).status, 200);
    }
};

TEST_F(ApiTest, HealthNeedsNoToken) {
    auto r = call("GET", "/healthz", "");
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(json::parse(r.body).at("status"), "ok");
    EXPECT_EQ(call("POST", "/healthz", "").status, 405);
}

TEST_F(ApiTest, TokensAreRequired) {
    EXPECT_EQ(call("GET", "/graph", "").status, 401);
    EXPECT_EQ(call("GET", "/graph", "nope").status, 401);
    ApiRequest r{"GET", "/graph", {}, "Basic admin-token", "", ""};
    EXPECT_EQ(api.handle(r).status, 401);
    EXPECT_EQ(call("GET", "/graph", "t1-token").status, 200);
}

TEST_F(ApiTest, EndpointRoleMatrix) {
    seed_page();
    const auto ws = engine.workspace_copy();
    const PageId page = ws.model.pages()[0].id;
    const auto go = ws.model.find_element(page, ElementKind::action, "f.go")->value;

    struct Case {
        std::string method, path, token;
        json body;
        int status;
    };
    const std::vector<Case> cases = {
        {"POST", "/admin/strategy", "t1-token", json{{"tester", "t1"}}, 403},
        {"POST", "/admin/strategy", "lead-token", json{{"tester", "t1"}}, 200},
        {"POST", "/admin/strategy", "admin-token", json{{"tester", "t2"}}, 200},
        {"POST", "/admin/priority", "t2-token", json{{"page", page.value}, {"priority", 3}}, 403},
        {"POST", "/admin/priority", "lead-token", json{{"page", page.value}, {"priority", 3}}, 200},
        {"POST", "/admin/priority", "lead-token", json{{"page", page.value}, {"priority", 9}}, 422},
        {"POST", "/admin/priority", "lead-token", json{{"page", 999}, {"priority", 3}}, 404},
        {"POST", "/admin/notes", "lead-token", json{{"page", page.value}, {"text", "check totals"}}, 200},
        {"POST", "/admin/weights", "lead-token", json{{"tester", "nobody"}, {"linkElementsWeight", 2}}, 409},
        {"POST", "/admin/weights", "lead-token", json{{"tester", "t1"}, {"linkElementsWeight", 0}}, 422},
        {"POST", "/admin/launch", "lead-token", json::object(), 404},
        {"POST", "/admin/launch", "t1-token", json::object(), 403},
        {"GET", "/admin/strategy", "lead-token", nullptr, 405},
        {"POST", "/cit/generate", "t1-token", json{{"action", go}}, 403},
        {"POST", "/cit/generate", "lead-token", json{{"action", go}}, 422},  // no ECs yet
        {"POST", "/cit/generate", "lead-token", json{{"action", 4242}}, 404},
        {"GET", "/metrics", "t1-token", nullptr, 200},
        {"POST", "/metrics", "t1-token", nullptr, 405},
        {"GET", "/graph", "t2-token", nullptr, 200},
        {"GET", "/nowhere", "t1-token", nullptr, 404},
        {"POST", "/events", "t1-token", json{{"kind", "PAGE_VIEW"}}, 422},
        {"POST", "/events", "t2-token", event_to_json(activate("t1", "s1", 20, "home")), 403},
    };
    for (const auto& c : cases) {
        auto r = call(c.method, c.path, c.token, c.body);
        EXPECT_EQ(r.status, c.status) << c.method << " " << c.path << " as " << c.token << ": " << r.body;
        EXPECT_NO_THROW((void)json::parse(r.body));
    }
}

TEST_F(ApiTest, TestcaseEndpoint) {
    seed_page();
    EXPECT_EQ(call("GET", "/testcase", "t1-token").status, 409);
    ASSERT_EQ(call("POST", "/admin/strategy", "lead-token", json{{"tester", "t1"}, {"navigational", {"RANK_NEW"}}}).status, 200);
    auto r = call("GET", "/testcase", "t1-token");
    ASSERT_EQ(r.status, 200);
    const auto tc = json::parse(r.body);
    EXPECT_EQ(tc.at("url"), "/a");
    EXPECT_FALSE(tc.at("suggestions").empty());
    EXPECT_EQ(call("GET", "/testcase", "t2-token", nullptr, {{"tester", "t1"}}).status, 403);
    EXPECT_EQ(call("GET", "/testcase", "lead-token", nullptr, {{"tester", "t1"}}).status, 200);
    EXPECT_EQ(call("GET", "/testcase", "admin-token").status, 422);
    EXPECT_EQ(call("GET", "/testcase", "t1-token", nullptr, {{"page", "x1"}}).status, 422);
    EXPECT_EQ(call("GET", "/testcase", "t1-token", nullptr, {{"page", "77"}}).status, 404);
}

TEST_F(ApiTest, ValidationErrorsNameTheField) {
    seed_page();
    auto r = call("POST", "/admin/priority", "lead-token", json{{"priority", 2}});
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(json::parse(r.body).at("field"), "target");
    ApiRequest bad{"POST", "/events", {}, "Bearer t1-token", "application/json", "{not json"};
    r = api.handle(bad);
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(json::parse(r.body).at("field"), "body");
}

TEST_F(ApiTest, CsvImportUsesQueryAction) {
    seed_page();
    const auto ws = engine.workspace_copy();
    const auto go = ws.model.find_element(ws.model.pages()[0].id, ElementKind::action, "f.go")->value;
    ApiRequest r{"POST", "/cit/import", {{"action", std::to_string(go)}}, "Bearer lead-token", "text/csv", "f.q\n1\n2\n"};
    auto res = api.handle(r);
    ASSERT_EQ(res.status, 200) << res.body;
    r.query.clear();
    EXPECT_EQ(api.handle(r).status, 422);
    r.authorization = "Bearer t1-token";
    EXPECT_EQ(api.handle(r).status, 403);
}

TEST(ServiceConfig, StrictKeysAndRanges) {
    EXPECT_NO_THROW(ServiceConfig::from_json(json::object()));
    EXPECT_THROW(ServiceConfig::from_json(json{{"colour", "blue"}}), ValidationError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"http_port", 70000}}), ValidationError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"master_threshold", 0}}), ValidationError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"tokens", {{"x", {{"role", "tester"}}}}}}), ValidationError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"weights", {{"linkElementsWeight", 513}}}}), ValidationError);

    auto c = ServiceConfig::from_json(json{{"last_time", 3600},
                                           {"idle_threshold_s", 600},
                                           {"tokens", {{"abc", {{"role", "tester"}, {"tester", "t1"}}}}},
                                           {"snapshot_every", 8}});
    EXPECT_EQ(c.weights.last_time_s, 3600);
    EXPECT_EQ(c.tokens.at("abc").tester, "t1");
    const auto e = c.engine_config();
    EXPECT_EQ(e.idle_threshold_ms, 600'000);
    EXPECT_EQ(e.snapshot_every, 8u);
}

TEST(ServiceConfig, EnvironmentOverridesFile) {
    std::map<std::string, std::string> env{{"WAYFINDER_HTTP_PORT", "9100"},
                                           {"WAYFINDER_HOST", "0.0.0.0"},
                                           {"WAYFINDER_STORE_PATH", "123"},
                                           {"WAYFINDER_URL_QUERY_ALLOWLIST", R"(["id"])"}};
    EnvLookup lookup = [&](const std::string& name) -> std::optional<std::string> {
        auto it = env.find(name);
        if (it == env.end()) return std::nullopt;
        return it->second;
    };
    auto doc = apply_env_overrides(json{{"http_port", 8000}, {"live_port", 8001}}, lookup);
    auto c = ServiceConfig::from_json(doc);
    EXPECT_EQ(c.http_port, 9100);
    EXPECT_EQ(c.live_port, 8001);
    EXPECT_EQ(c.host, "0.0.0.0");
    ASSERT_TRUE(c.store_path);
    EXPECT_EQ(c.store_path->string(), "123");
    EXPECT_EQ(c.url_query_allowlist, std::vector<std::string>{"id"});

    env["WAYFINDER_SEED"] = "-4";
    EXPECT_THROW(ServiceConfig::from_json(apply_env_overrides(json::object(), lookup)), ValidationError);
}

TEST(Server, HttpAndLiveChannel) {
    namespace beast = boost::beast;
    namespace websocket = beast::websocket;
    using tcp = boost::asio::ip::tcp;

    Engine engine{EngineConfig{}};
    ServiceConfig cfg;
    cfg.tokens = kTokens;
    cfg.http_port = 0;
    cfg.live_port = 0;
    Server server(engine, cfg);
    server.start();
    ASSERT_GT(server.http_port(), 0);
    ASSERT_GT(server.live_port(), 0);

    httplib::Client http("127.0.0.1", server.http_port());
    auto health = http.Get("/healthz");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(http.Get("/graph")->status, 401);

    boost::asio::io_context io;
    tcp::resolver resolver(io);
    websocket::stream<tcp::socket> ws(io);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.live_port())));
    ws.handshake("127.0.0.1", "/live?token=t1-token");

    websocket::stream<tcp::socket> denied(io);
    boost::asio::connect(denied.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.live_port())));
    EXPECT_THROW(denied.handshake("127.0.0.1", "/live?token=t1-token&tester=t2"), beast::system_error);

    const httplib::Headers auth{{"Authorization", "Bearer t1-token"}};
    const auto start = std::chrono::steady_clock::now();
    auto posted = http.Post("/events", auth, event_to_json(session_start("t1", "s1", 0)).dump(), "application/json");
    ASSERT_TRUE(posted);
    EXPECT_EQ(posted->status, 200);

    auto frame = std::async(std::launch::async, [&] {
        beast::flat_buffer buffer;
        ws.read(buffer);
        return beast::buffers_to_string(buffer.data());
    });
    ASSERT_EQ(frame.wait_for(std::chrono::seconds(1)), std::future_status::ready);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    const json delta = json::parse(frame.get());
    EXPECT_EQ(delta.at("type"), "delta");
    EXPECT_EQ(delta.at("payload").at("tester"), "t1");
    EXPECT_LT(elapsed, std::chrono::seconds(1));

    auto graph = http.Get("/graph", auth);
    ASSERT_TRUE(graph);
    EXPECT_EQ(graph->status, 200);
    EXPECT_EQ(graph->body, engine.graph().dump());

    ws.close(websocket::close_code::normal);
    server.stop();
}

}  // namespace
}  // namespace wayfinder
