#include "zoosight/gateway.hpp"

#include <httplib.h>

#include <atomic>
#include <fstream>
#include <random>
#include <regex>
#include <semaphore>
#include <thread>

#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

std::string to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::HttpChat: return "http-chat";
        case BackendKind::HttpVision: return "http-vision";
        case BackendKind::Mock: return "mock";
    }
    return "mock";
}

BackendKind backend_kind_from_string(const std::string& text) {
    if (text == "http-chat") return BackendKind::HttpChat;
    if (text == "http-vision") return BackendKind::HttpVision;
    if (text == "mock") return BackendKind::Mock;
    fail(ErrorCode::InvalidConfig, "unknown backend kind '" + text + "'");
}

void BackendConfig::validate() const {
    if (kind != BackendKind::Mock && (!base_url || base_url->empty())) {
        fail(ErrorCode::InvalidConfig, to_string(kind) + " backend requires base_url");
    }
    if (max_retries < 0) fail(ErrorCode::InvalidConfig, "max_retries must be >= 0");
    if (max_in_flight < 1) fail(ErrorCode::InvalidConfig, "max_in_flight must be >= 1");
    if (timeout.count() <= 0) fail(ErrorCode::InvalidConfig, "timeout must be positive");
}

// ---- audit log ---------------------------------------------------------------

AuditLog::AuditLog(std::string path) : path_(std::move(path)) {}

void AuditLog::append(const std::string& backend, const std::string& digest, const std::string& response) {
    json record = {{"timestamp", now_utc()}, {"backend", backend}, {"request_digest", digest}, {"response", response}};
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) fail(ErrorCode::IoError, "cannot append audit log " + path_);
    out << record.dump() << '\n';
}

std::string request_digest(const ChatRequest& request) {
    json doc = {{"system", request.system_message.value_or("")},
                {"prompt", request.prompt},
                {"temperature", request.temperature},
                {"max_tokens", request.max_tokens}};
    return sha256_hex(doc.dump());
}

std::string request_digest(const VisionRequest& request) {
    json doc = {{"image_id", request.image.image_id},
                {"path", request.image.path.string()},
                {"prompt", request.prompt},
                {"temperature", request.temperature}};
    return sha256_hex(doc.dump());
}

std::string chat_key(const ChatRequest& request) { return sha256_hex(request.prompt); }

// ---- base --------------------------------------------------------------------

std::string ModelBackend::chat(const ChatRequest& request) {
    require(!request.prompt.empty(), "chat: prompt must be non-empty");
    require(request.temperature >= 0.0, "chat: temperature must be >= 0");
    require(request.max_tokens > 0, "chat: max_tokens must be positive");
    std::string response = do_chat(request);
    if (audit_) audit_->append(name(), request_digest(request), response);
    return response;
}

std::string ModelBackend::vision(const VisionRequest& request) {
    require(!request.prompt.empty(), "vision: prompt must be non-empty");
    require(request.temperature >= 0.0, "vision: temperature must be >= 0");
    std::error_code ec;
    require(!request.image.path.empty() && std::filesystem::is_regular_file(request.image.path, ec),
            "vision: image not resolvable: " + request.image.path.string());
    std::string response = do_vision(request);
    if (audit_) audit_->append(name(), request_digest(request), response);
    return response;
}

// ---- mock --------------------------------------------------------------------

MockBackend::MockBackend(MockScript script, std::size_t max_in_flight)
    : script_(std::move(script)), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {
    require(!script_.empty(), "mock script must be non-empty");
}

std::string MockBackend::next(const std::string& kind, const std::string& key,
                              const std::optional<std::string>& system, const std::string& prompt) {
    std::lock_guard lock(mutex_);
    calls_.push_back({kind, key, system, prompt});
    const auto it = script_.find(key);
    if (it == script_.end()) fail(ErrorCode::ScriptExhausted, "mock: no script for key " + key);
    auto& index = cursor_[key];
    if (index >= it->second.size()) {
        fail(ErrorCode::ScriptExhausted, "mock: script exhausted for key " + key);
    }
    const MockReply& reply = it->second[index++];
    if (reply.error) fail(*reply.error, "mock: scripted failure for key " + key);
    return reply.text;
}

std::string MockBackend::do_chat(const ChatRequest& request) {
    return next("chat", chat_key(request), request.system_message, request.prompt);
}

std::string MockBackend::do_vision(const VisionRequest& request) {
    return next("vision", request.image.image_id, std::nullopt, request.prompt);
}

std::vector<MockBackend::Call> MockBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::size_t MockBackend::calls_for(const std::string& key) const {
    std::lock_guard lock(mutex_);
    const auto it = cursor_.find(key);
    return it == cursor_.end() ? 0 : it->second;
}

std::shared_ptr<MockBackend> mock_from_script(MockScript script) {
    return std::make_shared<MockBackend>(std::move(script));
}

namespace {

ErrorCode scripted_error(const std::string& name) {
    if (name == "transport") return ErrorCode::TransportError;
    if (name == "rate_limited") return ErrorCode::RateLimited;
    if (name == "malformed") return ErrorCode::MalformedResponse;
    fail(ErrorCode::InvalidConfig, "unknown scripted error '" + name + "'");
}

}  // namespace

MockScript parse_mock_script(const json& doc) {
    if (!doc.is_object()) fail(ErrorCode::InvalidConfig, "mock script must be a JSON object");
    MockScript script;
    for (const auto& [key, replies] : doc.items()) {
        if (!replies.is_array()) fail(ErrorCode::InvalidConfig, "mock script entry '" + key + "' must be an array");
        auto& list = script[key];
        for (const auto& reply : replies) {
            if (reply.is_string()) {
                list.push_back({reply.get<std::string>(), std::nullopt});
            } else if (reply.is_object() && reply.contains("error")) {
                list.push_back(MockReply::fail_with(scripted_error(reply.at("error").get<std::string>())));
            } else {
                fail(ErrorCode::InvalidConfig, "bad mock reply under '" + key + "'");
            }
        }
    }
    return script;
}

MockScript load_mock_script(const std::string& path) {
    try {
        return parse_mock_script(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig, "cannot parse mock script " + path + ": " + e.what());
    }
}

// ---- callback ----------------------------------------------------------------

CallbackBackend::CallbackBackend(ChatFn chat, VisionFn vision, std::size_t max_in_flight)
    : chat_(std::move(chat)), vision_(std::move(vision)), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

std::string CallbackBackend::do_chat(const ChatRequest& request) {
    if (!chat_) fail(ErrorCode::TransportError, "callback backend has no chat handler");
    return chat_(request);
}

std::string CallbackBackend::do_vision(const VisionRequest& request) {
    if (!vision_) fail(ErrorCode::TransportError, "callback backend has no vision handler");
    return vision_(request);
}

// ---- http --------------------------------------------------------------------

struct HttpBackend::Impl {
    explicit Impl(int in_flight) : limiter(in_flight) {}

    std::counting_semaphore<1 << 16> limiter;
    std::string origin;       // scheme://host:port
    std::string path_prefix;  // e.g. /v1
    std::atomic<std::uint64_t> attempts{0};
    std::mutex rng_mutex;
    Rng rng{std::random_device{}()};
};

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.kind == BackendKind::Mock) fail(ErrorCode::InvalidConfig, "HttpBackend needs an http kind");
    config_.validate();
    impl_ = std::make_unique<Impl>(config_.max_in_flight);

    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    const std::string base = *config_.base_url;
    if (!std::regex_match(base, m, url)) fail(ErrorCode::InvalidConfig, "malformed base_url " + base);
    impl_->origin = m[1];
    impl_->path_prefix = m[2].matched ? m[2].str() : "";
    while (!impl_->path_prefix.empty() && impl_->path_prefix.back() == '/') impl_->path_prefix.pop_back();
}

HttpBackend::~HttpBackend() = default;

std::uint64_t HttpBackend::attempts() const { return impl_->attempts.load(); }

json HttpBackend::chat_payload(const ChatRequest& request, const std::string& model) {
    json messages = json::array();
    if (request.system_message) messages.push_back({{"role", "system"}, {"content", *request.system_message}});
    messages.push_back({{"role", "user"}, {"content", request.prompt}});
    return {{"model", model},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
}

json HttpBackend::vision_payload(const VisionRequest& request, const std::string& model) {
    const std::string bytes = read_file(request.image.path.string());
    const std::string ext = to_lower(request.image.path.extension().string());
    const std::string mime = ext == ".png" ? "image/png" : "image/jpeg";
    json content = json::array(
        {{{"type", "text"}, {"text", request.prompt}},
         {{"type", "image_url"},
          {"image_url", {{"url", "data:" + mime + ";base64," + base64_encode(bytes)}}}}});
    return {{"model", model},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
}

std::string HttpBackend::do_chat(const ChatRequest& request) {
    return post(chat_payload(request, config_.model_name));
}

std::string HttpBackend::do_vision(const VisionRequest& request) {
    return post(vision_payload(request, config_.model_name));
}

std::chrono::milliseconds HttpBackend::backoff_delay(int attempt) {
    const auto base = config_.base_backoff.count();
    long long delay = base << std::min(attempt, 20);
    delay = std::min<long long>(delay, config_.max_backoff.count());
    if (!config_.deterministic_backoff && delay > 0) {
        std::lock_guard lock(impl_->rng_mutex);
        delay += static_cast<long long>(uniform_index(impl_->rng, static_cast<std::size_t>(delay / 2 + 1)));
    }
    return std::chrono::milliseconds(delay);
}

std::string HttpBackend::post(const json& payload) {
    impl_->limiter.acquire();
    struct Release {
        Impl& impl;
        ~Release() { impl.limiter.release(); }
    } release{*impl_};

    const std::string body = payload.dump();
    const std::string path = impl_->path_prefix + "/chat/completions";
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    ErrorCode last_code = ErrorCode::TransportError;
    std::string last_message;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(backoff_delay(attempt - 1));
        ++impl_->attempts;

        httplib::Client client(impl_->origin);
        const auto timeout = config_.timeout;
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                      static_cast<long>((timeout.count() % 1000) * 1000));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                static_cast<long>((timeout.count() % 1000) * 1000));
        auto result = client.Post(path, headers, body, "application/json");
        if (!result) {
            last_code = ErrorCode::TransportError;
            last_message = "transport failure: " + httplib::to_string(result.error());
            continue;
        }
        const int status = result->status;
        if (status == 429) {
            last_code = ErrorCode::RateLimited;
            last_message = "rate limited (HTTP 429)";
            continue;
        }
        if (status >= 500) {
            last_code = ErrorCode::TransportError;
            last_message = "server error HTTP " + std::to_string(status);
            continue;
        }
        if (status != 200) {
            fail(ErrorCode::TransportError, "request rejected HTTP " + std::to_string(status) + ": " + result->body);
        }
        try {
            const json doc = json::parse(result->body);
            const auto& content = doc.at("choices").at(0).at("message").at("content");
            if (!content.is_string()) fail(ErrorCode::MalformedResponse, "message content is not a string");
            return content.get<std::string>();
        } catch (const json::exception& e) {
            fail(ErrorCode::MalformedResponse, std::string("malformed completion response: ") + e.what());
        }
    }
    fail(last_code, last_message + " after " + std::to_string(config_.max_retries) + " retries");
}

std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config) {
    config.validate();
    std::shared_ptr<ModelBackend> backend;
    if (config.kind == BackendKind::Mock) {
        if (!config.script_path) fail(ErrorCode::InvalidConfig, "mock backend requires a script path");
        // Scripted replay stays serial so per-key reply order is reproducible.
        backend = std::make_shared<MockBackend>(load_mock_script(*config.script_path));
    } else {
        backend = std::make_shared<HttpBackend>(config);
    }
    if (config.audit_log_path) backend->set_audit_log(std::make_shared<AuditLog>(*config.audit_log_path));
    return backend;
}

}  // namespace zoosight
