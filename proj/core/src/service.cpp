#include <wayfinder/service.hpp>

#include <httplib.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <charconv>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace wayfinder {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kConfigKeys = {
    "weights",     "last_time", "idle_threshold_s",  "error_patterns", "url_query_allowlist",
    "master_threshold", "store_path", "tokens", "host", "http_port",
    "live_port", "reorder_window_ms", "snapshot_every", "seed",
};

const std::set<std::string> kStringKeys = {"store_path", "host"};

template <typename T>
T read_number(const json& j, const std::string& key, T lo, T hi) {
    const json& v = j.at(key);
    if (!v.is_number()) throw ValidationError(key, key + " must be a number");
    if constexpr (std::is_floating_point_v<T>) {
        const T x = v.get<T>();
        if (!(x >= lo && x <= hi)) throw ValidationError(key, key + " out of range");
        return x;
    } else {
        if (!v.is_number_integer()) throw ValidationError(key, key + " must be an integer");
        const auto x = v.get<std::int64_t>();
        if (x < static_cast<std::int64_t>(lo) || x > static_cast<std::int64_t>(hi)) {
            throw ValidationError(key, key + " out of range");
        }
        return static_cast<T>(x);
    }
}

}  // namespace

EngineConfig ServiceConfig::engine_config() const {
    EngineConfig c;
    c.reconstruction.normalization.query_allowlist = {url_query_allowlist.begin(), url_query_allowlist.end()};
    c.reconstruction.error_patterns = error_patterns;
    c.reconstruction.master_threshold = master_threshold;
    c.reconstruction.reorder_window_ms = reorder_window_ms;
    c.default_weights = weights;
    c.idle_threshold_ms = idle_threshold_s * 1000;
    c.snapshot_every = snapshot_every;
    c.seed = seed;
    return c;
}

ServiceConfig ServiceConfig::from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config", "config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
            throw ValidationError(key, "unknown config key '" + key + "'");
        }
    }
    ServiceConfig c;
    if (j.contains("weights")) wayfinder::from_json(j.at("weights"), c.weights);
    if (j.contains("last_time")) {
        c.weights.last_time_s = read_number<std::int64_t>(j, "last_time", 0, std::int64_t{1} << 40);
        c.weights.validate();
    }
    if (j.contains("idle_threshold_s")) {
        c.idle_threshold_s = read_number<std::int64_t>(j, "idle_threshold_s", 1, std::int64_t{1} << 40);
    }
    if (j.contains("error_patterns")) c.error_patterns = ErrorPatternSet::from_json(j.at("error_patterns"));
    if (j.contains("url_query_allowlist")) {
        const json& a = j.at("url_query_allowlist");
        if (!a.is_array()) throw ValidationError("url_query_allowlist", "url_query_allowlist must be an array of strings");
        for (const auto& k : a) {
            if (!k.is_string()) throw ValidationError("url_query_allowlist", "url_query_allowlist must be an array of strings");
            c.url_query_allowlist.push_back(k.get<std::string>());
        }
    }
    if (j.contains("master_threshold")) {
        c.master_threshold = read_number<double>(j, "master_threshold", 0.0, 1.0);
        if (c.master_threshold <= 0) throw ValidationError("master_threshold", "master_threshold must be in (0, 1]");
    }
    if (j.contains("store_path") && !j.at("store_path").is_null()) {
        if (!j.at("store_path").is_string()) throw ValidationError("store_path", "store_path must be a string");
        c.store_path = j.at("store_path").get<std::string>();
    }
    if (j.contains("tokens")) {
        const json& t = j.at("tokens");
        if (!t.is_object()) throw ValidationError("tokens", "tokens must map token strings to {role, tester}");
        for (const auto& [token, who] : t.items()) {
            if (!who.is_object() || !who.contains("role")) {
                throw ValidationError("tokens", "token entry must be an object with a role");
            }
            Caller caller;
            caller.role = role_from_string(who.at("role").get<std::string>());
            caller.tester = who.value("tester", std::string());
            if (caller.role == Role::tester && caller.tester.empty()) {
                throw ValidationError("tokens", "tester tokens must name a tester");
            }
            c.tokens[token] = caller;
        }
    }
    if (j.contains("host")) {
        if (!j.at("host").is_string()) throw ValidationError("host", "host must be a string");
        c.host = j.at("host").get<std::string>();
    }
    if (j.contains("http_port")) c.http_port = read_number<int>(j, "http_port", 0, 65535);
    if (j.contains("live_port")) c.live_port = read_number<int>(j, "live_port", 0, 65535);
    if (j.contains("reorder_window_ms")) {
        c.reorder_window_ms = read_number<std::int64_t>(j, "reorder_window_ms", 0, std::int64_t{1} << 40);
    }
    if (j.contains("snapshot_every")) {
        c.snapshot_every = read_number<std::size_t>(j, "snapshot_every", 0, std::size_t{1} << 30);
    }
    if (j.contains("seed")) {
        const json& s = j.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) throw ValidationError("seed", "seed must be a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    return c;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

json apply_env_overrides(json doc, const EnvLookup& env) {
    if (doc.is_null()) doc = json::object();
    for (const auto& key : kConfigKeys) {
        std::string name = kEnvPrefix;
        for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        auto value = env(name);
        if (!value) continue;
        if (kStringKeys.count(key)) {
            doc[key] = *value;
            continue;
        }
        try {
            doc[key] = json::parse(*value);
        } catch (const json::parse_error&) {
            doc[key] = *value;
        }
    }
    return doc;
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
    json doc = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ValidationError("config", "cannot read config file " + path->string());
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ValidationError("config", std::string("config file is not valid JSON: ") + e.what());
        }
    }
    return ServiceConfig::from_json(apply_env_overrides(std::move(doc), env));
}

// ---------------------------------------------------------------------------
// API
// ---------------------------------------------------------------------------

namespace {

ApiResponse reply(int status, const json& body) { return ApiResponse{status, body.dump()}; }

ApiResponse reply(int status, const nlohmann::ordered_json& body) { return ApiResponse{status, body.dump()}; }

ApiResponse error_reply(int status, const std::string& message, const std::string& field = {}) {
    json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    return reply(status, body);
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw ValidationError("body", std::string("request body is not valid JSON: ") + e.what());
    }
}

std::uint32_t parse_id(const std::string& text, const std::string& field) {
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw ValidationError(field, field + " must be a numeric id");
    }
    return value;
}

const std::set<std::string> kAdminPaths = {"priority", "ecs", "notes", "strategy", "weights"};

}  // namespace

Api::Api(Engine& engine, std::map<std::string, Caller> tokens) : engine_(engine), tokens_(std::move(tokens)) {}

std::optional<Caller> Api::authenticate_token(std::string_view token) const {
    auto it = tokens_.find(std::string(token));
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
}

std::optional<Caller> Api::authenticate(std::string_view header) const {
    constexpr std::string_view prefix = "Bearer ";
    if (header.substr(0, prefix.size()) != prefix) return std::nullopt;
    return authenticate_token(header.substr(prefix.size()));
}

ApiResponse Api::handle(const ApiRequest& request) {
    if (request.path == "/healthz") {
        if (request.method != "GET") return error_reply(405, "method not allowed");
        return reply(200, engine_.health());
    }
    auto caller = authenticate(request.authorization);
    if (!caller) return error_reply(401, "missing or unknown bearer token");
    try {
        return route(request, *caller);
    } catch (const ValidationError& e) {
        return error_reply(422, e.what(), e.field());
    } catch (const json::exception& e) {
        return error_reply(422, e.what());
    } catch (const std::overflow_error& e) {
        return error_reply(422, e.what());
    } catch (const NotFound& e) {
        return error_reply(404, e.what());
    } catch (const Conflict& e) {
        return error_reply(409, e.what());
    } catch (const Forbidden& e) {
        return error_reply(403, e.what());
    } catch (const Unauthorized& e) {
        return error_reply(401, e.what());
    } catch (const std::exception& e) {
        return error_reply(500, e.what());
    }
}

ApiResponse Api::route(const ApiRequest& request, const Caller& caller) {
    const std::string& path = request.path;
    const bool get = request.method == "GET";
    const bool post = request.method == "POST";
    auto query = [&](const std::string& key) -> std::optional<std::string> {
        auto it = request.query.find(key);
        if (it == request.query.end()) return std::nullopt;
        return it->second;
    };

    if (path == "/events") {
        if (!post) return error_reply(405, "method not allowed");
        return reply(200, engine_.post_event(parse_body(request.body), caller));
    }
    if (path == "/testcase") {
        if (!get) return error_reply(405, "method not allowed");
        const TesterId tester = query("tester").value_or(caller.tester);
        if (tester.empty()) throw ValidationError("tester", "query parameter 'tester' is required");
        std::optional<PageId> page;
        if (auto p = query("page")) page = PageId{parse_id(*p, "page")};
        return reply(200, engine_.testcase(tester, page, caller));
    }
    if (path.rfind("/admin/", 0) == 0) {
        if (!post) return error_reply(405, "method not allowed");
        const std::string op = path.substr(7);
        if (!kAdminPaths.count(op)) {
            if (!is_lead(caller.role)) throw Forbidden("administration requires the test_lead role");
            return error_reply(404, "unknown admin operation '" + op + "'");
        }
        return reply(200, engine_.admin(op, parse_body(request.body), caller));
    }
    if (path == "/cit/import") {
        if (!post) return error_reply(405, "method not allowed");
        if (!is_lead(caller.role)) throw Forbidden("CIT import requires the test_lead role");
        json body;
        if (request.content_type.rfind("text/csv", 0) == 0) {
            auto action = query("action");
            if (!action) throw ValidationError("action", "query parameter 'action' is required for CSV imports");
            body = json{{"action", parse_id(*action, "action")}, {"format", "csv"}, {"document", request.body}};
        } else {
            const json doc = parse_body(request.body);
            json action;
            if (auto a = query("action")) {
                action = parse_id(*a, "action");
            } else if (doc.is_object() && doc.contains("action") && doc.at("action").is_number_integer() && doc.at("action").get<std::int64_t>() >= 0) {
                action = doc.at("action");
            } else {
                throw ValidationError("action", "the action id must be given as a number or as ?action=");
            }
            body = json{{"action", action}, {"format", "json"}, {"document", request.body}};
        }
        return reply(200, engine_.admin("cit_import", body, caller));
    }
    if (path == "/cit/generate") {
        if (!post) return error_reply(405, "method not allowed");
        return reply(200, engine_.admin("cit_generate", parse_body(request.body), caller));
    }
    if (path == "/metrics") {
        if (!get) return error_reply(405, "method not allowed");
        return reply(200, engine_.metrics(query("scope").value_or("team")));
    }
    if (path == "/graph") {
        if (!get) return error_reply(405, "method not allowed");
        return reply(200, engine_.graph());
    }
    return error_reply(404, "no such endpoint " + path);
}

// ---------------------------------------------------------------------------
// Servers
// ---------------------------------------------------------------------------

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

std::map<std::string, std::string> parse_query(std::string_view target) {
    std::map<std::string, std::string> out;
    auto q = target.find('?');
    if (q == std::string_view::npos) return out;
    httplib::Params params;
    httplib::detail::parse_query_text(std::string(target.substr(q + 1)), params);
    for (const auto& [k, v] : params) out.emplace(k, v);
    return out;
}

/// Live subscriptions owned by the server, so stop() can detach them from the engine.
struct Subscriptions {
    std::mutex mutex;
    std::set<std::uint64_t> ids;
};

class LiveSession : public std::enable_shared_from_this<LiveSession> {
public:
    LiveSession(tcp::socket socket, Engine& engine, const Api& api, std::shared_ptr<Subscriptions> subs)
        : ws_(std::move(socket)), engine_(engine), api_(api), subs_(std::move(subs)) {}

    ~LiveSession() { detach(); }

    void run() {
        net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->read_request(); });
    }

private:
    void read_request() {
        http::async_read(ws_.next_layer(), buffer_, request_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
    }

    void reject(http::status status, std::string message) {
        auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
        res->set(http::field::content_type, "application/json");
        res->body() = json{{"error", std::move(message)}}.dump();
        res->prepare_payload();
        http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
            beast::error_code ignored;
            self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ignored);
        });
    }

    void on_request(beast::error_code ec) {
        if (ec) return;
        if (!websocket::is_upgrade(request_)) return reject(http::status::bad_request, "expected a WebSocket upgrade");
        const std::string_view target(request_.target().data(), request_.target().size());
        auto query = parse_query(target);
        std::optional<Caller> caller;
        if (auto it = query.find("token"); it != query.end()) {
            caller = api_.authenticate_token(it->second);
        } else {
            auto h = request_[http::field::authorization];
            caller = api_.authenticate(std::string_view(h.data(), h.size()));
        }
        if (!caller) return reject(http::status::unauthorized, "missing or unknown token");
        TesterId tester = caller->tester;
        if (auto it = query.find("tester"); it != query.end()) tester = it->second;
        if (tester.empty()) return reject(http::status::unprocessable_entity, "query parameter 'tester' is required");
        if (caller->role == Role::tester && tester != caller->tester) {
            return reject(http::status::forbidden, "testers may only subscribe to their own channel");
        }

        // Subscribe before completing the handshake: once the client sees the upgrade,
        // every later commit reaches it.
        std::weak_ptr<LiveSession> weak = shared_from_this();
        auto exec = ws_.get_executor();
        subscription_ = engine_.subscribe(tester, [weak, exec](const json& frame) {
            net::post(exec, [weak, text = frame.dump()]() mutable {
                if (auto self = weak.lock()) self->enqueue(std::move(text));
            });
        });
        {
            std::lock_guard lock(subs_->mutex);
            subs_->ids.insert(*subscription_);
        }
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(request_, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

    void on_accept(beast::error_code ec) {
        if (ec) return detach();
        accepted_ = true;
        if (!queue_.empty()) write_next();
        read_next();
    }

    void read_next() {
        ws_.async_read(inbound_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->detach();
            self->inbound_.consume(self->inbound_.size());  // clients have nothing to say yet
            self->read_next();
        });
    }

    void enqueue(std::string text) {
        queue_.push_back(std::move(text));
        if (accepted_ && queue_.size() == 1) write_next();
    }

    void write_next() {
        ws_.text(true);
        ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->detach();
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->write_next();
        });
    }

    void detach() {
        if (!subscription_) return;
        engine_.unsubscribe(*subscription_);
        std::lock_guard lock(subs_->mutex);
        subs_->ids.erase(*subscription_);
        subscription_.reset();
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    beast::flat_buffer inbound_;
    http::request<http::string_body> request_;
    std::deque<std::string> queue_;
    bool accepted_ = false;
    std::optional<std::uint64_t> subscription_;
    Engine& engine_;
    const Api& api_;
    std::shared_ptr<Subscriptions> subs_;
};

}  // namespace

struct Server::Impl {
    Impl(Engine& e, const ServiceConfig& c) : engine(e), config(c), api(e, c.tokens) {}

    void accept_next() {
        acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<LiveSession>(std::move(socket), engine, api, subs)->run();
            accept_next();
        });
    }

    Engine& engine;
    ServiceConfig config;
    Api api;
    httplib::Server http;
    std::thread http_thread;
    int http_port = 0;

    net::io_context ioc;
    std::optional<tcp::acceptor> acceptor;
    std::thread live_thread;
    int live_port = 0;
    std::shared_ptr<Subscriptions> subs = std::make_shared<Subscriptions>();
    bool running = false;
};

Server::Server(Engine& engine, const ServiceConfig& config) : impl_(std::make_unique<Impl>(engine, config)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        ApiRequest request;
        request.method = req.method;
        request.path = req.path;
        for (const auto& [k, v] : req.params) request.query.emplace(k, v);
        request.authorization = req.get_header_value("Authorization");
        request.content_type = req.get_header_value("Content-Type");
        request.body = req.body;
        ApiResponse response = impl_->api.handle(request);
        res.status = response.status;
        res.set_content(response.body, "application/json");
    };
    impl_->http.Get(R"(/.*)", handler);
    impl_->http.Post(R"(/.*)", handler);
    impl_->http.Put(R"(/.*)", handler);
    impl_->http.Delete(R"(/.*)", handler);
}

Server::~Server() { stop(); }

void Server::start() {
    if (impl_->running) return;
    auto& i = *impl_;
    if (i.config.http_port == 0) {
        i.http_port = i.http.bind_to_any_port(i.config.host);
    } else {
        i.http_port = i.http.bind_to_port(i.config.host, i.config.http_port) ? i.config.http_port : -1;
    }
    if (i.http_port < 0) throw std::runtime_error("cannot bind HTTP port on " + i.config.host);

    tcp::endpoint endpoint(net::ip::make_address(i.config.host), static_cast<unsigned short>(i.config.live_port));
    i.acceptor.emplace(i.ioc);
    i.acceptor->open(endpoint.protocol());
    i.acceptor->set_option(net::socket_base::reuse_address(true));
    i.acceptor->bind(endpoint);
    i.acceptor->listen(net::socket_base::max_listen_connections);
    i.live_port = i.acceptor->local_endpoint().port();
    i.accept_next();

    i.http_thread = std::thread([&i] { i.http.listen_after_bind(); });
    i.live_thread = std::thread([&i] { i.ioc.run(); });
    i.http.wait_until_ready();
    i.running = true;
}

void Server::stop() {
    auto& i = *impl_;
    if (!i.running) return;
    i.running = false;
    {
        std::lock_guard lock(i.subs->mutex);
        for (auto id : i.subs->ids) i.engine.unsubscribe(id);
        i.subs->ids.clear();
    }
    i.http.stop();
    if (i.http_thread.joinable()) i.http_thread.join();
    net::post(i.ioc, [&i] {
        beast::error_code ignored;
        i.acceptor->close(ignored);
    });
    i.ioc.stop();
    if (i.live_thread.joinable()) i.live_thread.join();
}

int Server::http_port() const { return impl_->http_port; }
int Server::live_port() const { return impl_->live_port; }

}  // namespace wayfinder
