#pragma once

#include "peach/pipeline.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace peach {

struct ApiRequest {
    std::string method;  // "GET", "POST"
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

// Socket-free request handling over an immutable workspace. Every method is
// const and the handler may be shared across server threads.
class ApiHandler {
public:
    explicit ApiHandler(const Workspace& workspace);

    ApiResponse handle(const ApiRequest& request) const;

    ApiResponse meta() const;
    ApiResponse tree(const std::map<std::string, std::string>& query) const;
    ApiResponse documents(const std::map<std::string, std::string>& query) const;
    ApiResponse explain(const std::string& body) const;

private:
    const Workspace& ws_;
    std::string meta_body_;
    std::vector<std::size_t> order_;  // bundle rows sorted by doc_id
};

inline constexpr std::size_t kDefaultPageSize = 20;
inline constexpr std::size_t kMaxPageSize = 1000;

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> static_dir;
};

// HTTP binding of ApiHandler. Static files from `static_dir` are served under /.
class HttpServer {
public:
    HttpServer(const Workspace& workspace, ServeOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds the socket; returns the bound port. Throws ConfigError when binding fails.
    int bind();
    // Blocks until stop() is called.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace peach
