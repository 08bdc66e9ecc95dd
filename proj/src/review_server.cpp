#include "zoosight/review_server.hpp"

#include <httplib.h>

#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

namespace fs = std::filesystem;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::Precondition:
        case ErrorCode::InvalidLog:
        case ErrorCode::OffListLabel:
        case ErrorCode::InvalidConfig:
            return 400;
        case ErrorCode::Unauthorized:
            return 401;
        case ErrorCode::UnknownRun:
        case ErrorCode::UnknownItem:
        case ErrorCode::NotFound:
            return 404;
        case ErrorCode::ConflictingLabel:
        case ErrorCode::DuplicateId:
            return 409;
        default:
            return 500;
    }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    send_json(res, http_status(code), {{"code", std::string(code_name(code))}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        fail(ErrorCode::Precondition, std::string("request body is not valid JSON: ") + e.what());
    }
}

std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> values;
    for (const auto& part : split(text, ',')) {
        const auto t = trim(part);
        if (t.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        require(used == t.size(), "threshold '" + t + "' is not a number");
        values.push_back(v);
    }
    require(!values.empty(), "thresholds must list at least one value");
    return values;
}

}  // namespace

ReviewServer::ReviewServer(ReviewService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

std::string ReviewServer::media_url(const std::string& image) const {
    if (!options_.media_root) return "";
    const fs::path path(image);
    std::error_code ec;
    const auto root = fs::weakly_canonical(*options_.media_root, ec);
    const auto full = fs::weakly_canonical(path, ec);
    auto rel = full.lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") rel = path.filename();
    return "/media/" + rel.generic_string();
}

void ReviewServer::install_routes() {
    auto& server = *server_;

    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (options_.token && req.get_header_value(kTokenHeader) != *options_.token) {
            send_error(res, ErrorCode::Unauthorized, "missing or wrong review token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const std::exception& e) {
            send_json(res, 500, {{"code", "Internal"}, {"message", e.what()}});
        }
    });

    auto item_json = [this](const ReviewItem& item) {
        json doc = to_json(item, *service_.run(item.run_id));
        if (doc["image_ref"].is_string()) doc["media_url"] = media_url(doc["image_ref"].get<std::string>());
        return doc;
    };

    server.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        require(body.contains("p") && body["p"].is_number(), "body needs numeric 'p'");
        std::vector<Prediction> records;
        if (body.contains("predictions")) {
            require(body["predictions"].is_array(), "'predictions' must be an array");
            for (const auto& r : body["predictions"]) records.push_back(prediction_from_json(r));
        } else if (body.contains("log")) {
            records = parse_prediction_log(body["log"].get<std::string>());
        } else {
            fail(ErrorCode::Precondition, "body needs 'predictions' or 'log'");
        }
        std::vector<std::string> labels;
        std::string kb_ref = body.value("kb_ref", "");
        if (body.contains("kb")) {
            labels = knowledge_base_from_json(body["kb"]).labels();
        } else if (body.contains("kb_path")) {
            kb_ref = body["kb_path"].get<std::string>();
            labels = load_knowledge_base(kb_ref).labels();
        } else if (body.contains("labels")) {
            labels = body["labels"].get<std::vector<std::string>>();
        } else {
            fail(ErrorCode::Precondition, "body needs 'kb', 'kb_path' or 'labels'");
        }
        std::optional<std::string> run_id;
        if (body.contains("run_id")) run_id = body["run_id"].get<std::string>();
        const auto run = service_.create_run(std::move(records), labels, body["p"].get<double>(), kb_ref, run_id);
        send_json(res, 201,
                  {{"run_id", run->run_id},
                   {"threshold", run->threshold},
                   {"accepted", run->accepted.size()},
                   {"queued", run->queue.size()},
                   {"labels", run->labels}});
    });

    server.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"runs", service_.run_ids()}});
    });

    server.Get(R"(/runs/([^/]+)/summary)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto summary = service_.run_summary(req.matches[1]);
        json doc = to_json(summary);
        doc["labels"] = service_.run(req.matches[1])->labels;
        send_json(res, 200, doc);
    });

    server.Get(R"(/runs/([^/]+)/curve)", [this](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::vector<double>> thresholds;
        if (req.has_param("thresholds")) thresholds = parse_thresholds(req.get_param_value("thresholds"));
        json curve = json::array();
        for (const auto& p : service_.what_if(req.matches[1], thresholds)) curve.push_back(to_json(p));
        send_json(res, 200, {{"run_id", req.matches[1]}, {"curve", curve}});
    });

    server.Get(R"(/runs/([^/]+)/next)", [this, item_json](const httplib::Request& req, httplib::Response& res) {
        require(req.has_param("reviewer"), "query needs 'reviewer'");
        const std::string run_id = req.matches[1];
        const auto item = service_.next_review_item(run_id, req.get_param_value("reviewer"));
        send_json(res, 200,
                  {{"item", item ? item_json(*item) : json(nullptr)}, {"remaining", service_.run(run_id)->pending()}});
    });

    server.Post(R"(/items/([^/]+)/label)", [this, item_json](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        require(body.contains("label") && body["label"].is_string(), "body needs string 'label'");
        require(body.contains("reviewer") && body["reviewer"].is_string(), "body needs string 'reviewer'");
        const auto item = service_.submit_label(req.matches[1], body["label"], body["reviewer"]);
        send_json(res, 200, item_json(item));
    });

    server.Get(R"(/items/([^/]+))", [this, item_json](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, item_json(service_.item(req.matches[1])));
    });

    if (options_.media_root) {
        if (!server.set_mount_point("/media", options_.media_root->string())) {
            fail(ErrorCode::InvalidConfig, "media root " + options_.media_root->string() + " is not a directory");
        }
    }
    if (options_.ui_root) {
        if (!server.set_mount_point("/", options_.ui_root->string())) {
            fail(ErrorCode::InvalidConfig, "UI root " + options_.ui_root->string() + " is not a directory");
        }
    }
}

int ReviewServer::bind() {
    if (options_.port == 0) {
        port_ = server_->bind_to_any_port(options_.host);
        if (port_ < 0) fail(ErrorCode::IoError, "cannot bind " + options_.host);
    } else {
        if (!server_->bind_to_port(options_.host, options_.port)) {
            fail(ErrorCode::IoError, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
        }
        port_ = options_.port;
    }
    return port_;
}

int ReviewServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void ReviewServer::run() {
    bind();
    server_->listen_after_bind();
}

void ReviewServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace zoosight
