#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "zoosight/review_service.hpp"

namespace httplib {
class Server;
}

namespace zoosight {

inline constexpr const char* kTokenHeader = "X-Review-Token";

struct ServerOptions {
    std::string host = "127.0.0.1";
    /// 0 binds an ephemeral port.
    int port = 8080;
    /// When set, every request must carry it in the X-Review-Token header.
    std::optional<std::string> token;
    /// Served under /media.
    std::optional<std::filesystem::path> media_root;
    /// Built review UI assets, served under /.
    std::optional<std::filesystem::path> ui_root;
};

/// HTTP/JSON front end for ReviewService. Errors are returned as {code, message}.
class ReviewServer {
public:
    ReviewServer(ReviewService& service, ServerOptions options);
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();
    int port() const { return port_; }

private:
    int bind();
    void install_routes();
    std::string media_url(const std::string& image) const;

    ReviewService& service_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

int http_status(ErrorCode code);

}  // namespace zoosight
