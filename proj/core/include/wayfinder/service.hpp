#pragma once

#include <wayfinder/engine.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace wayfinder {

struct ServiceConfig {
    WeightConfig weights;  // carries last_time
    std::int64_t idle_threshold_s = 900;
    ErrorPatternSet error_patterns;
    std::vector<std::string> url_query_allowlist;
    double master_threshold = 0.8;
    std::optional<std::filesystem::path> store_path;
    std::map<std::string, Caller> tokens;  // bearer token -> identity

    std::string host = "127.0.0.1";
    int http_port = 8080;
    int live_port = 8081;
    std::int64_t reorder_window_ms = 5000;
    std::size_t snapshot_every = 64;
    std::uint64_t seed = 0;

    EngineConfig engine_config() const;

    static ServiceConfig from_json(const nlohmann::json& j);
};

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

/// Reads process environment variables.
EnvLookup process_env();

inline constexpr const char* kEnvPrefix = "WAYFINDER_";

/// Applies WAYFINDER_<KEY> overrides to a JSON config document. Values that parse
/// as JSON replace the key as JSON; anything else is taken as a string.
nlohmann::json apply_env_overrides(nlohmann::json doc, const EnvLookup& env);

/// Loads a JSON config file (or an empty document when `path` is empty) plus overrides.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env);

// ---------------------------------------------------------------------------
// HTTP API, transport independent
// ---------------------------------------------------------------------------

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string authorization;  // raw Authorization header
    std::string content_type;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string body;  // JSON text
};

/// Maps requests onto the engine and domain errors onto status codes:
/// 401 bad token, 403 role, 404 unknown, 409 conflict, 422 validation.
class Api {
public:
    Api(Engine& engine, std::map<std::string, Caller> tokens);

    ApiResponse handle(const ApiRequest& request);

    /// Identity behind an Authorization header value; nullopt when unknown.
    std::optional<Caller> authenticate(std::string_view header) const;
    std::optional<Caller> authenticate_token(std::string_view token) const;

private:
    ApiResponse route(const ApiRequest& request, const Caller& caller);

    Engine& engine_;
    std::map<std::string, Caller> tokens_;
};

// ---------------------------------------------------------------------------
// Network servers
// ---------------------------------------------------------------------------

/// HTTP endpoints plus the WebSocket live channel (ws://host:live_port/live?token=..&tester=..).
class Server {
public:
    Server(Engine& engine, const ServiceConfig& config);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds both ports and serves on background threads. Port 0 picks a free port.
    void start();
    void stop();

    int http_port() const;
    int live_port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace wayfinder
