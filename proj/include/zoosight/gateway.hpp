#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosight/error.hpp"

namespace zoosight {

struct ChatRequest {
    std::optional<std::string> system_message;
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 1024;
};

struct ImageRef {
    std::string image_id;
    std::filesystem::path path;
};

struct VisionRequest {
    ImageRef image;
    std::string prompt;
    double temperature = 0.7;
    int max_tokens = 1024;
};

enum class BackendKind { HttpChat, HttpVision, Mock };

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& text);

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::optional<std::string> base_url;
    std::string model_name;
    std::string api_key;
    int max_retries = 3;
    int max_in_flight = 4;
    std::chrono::milliseconds timeout{60'000};
    std::chrono::milliseconds base_backoff{500};
    std::chrono::milliseconds max_backoff{30'000};
    /// Disables jitter so retry timing is reproducible.
    bool deterministic_backoff = false;
    /// Mock only: JSON script file.
    std::optional<std::string> script_path;
    std::optional<std::string> audit_log_path;

    void validate() const;
};

/// Append-only JSONL log of {timestamp, backend, request_digest, response}.
class AuditLog {
public:
    explicit AuditLog(std::string path);
    void append(const std::string& backend, const std::string& request_digest, const std::string& response);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::mutex mutex_;
};

/// Stable digest of the request content used for audit logs and mock keys.
std::string request_digest(const ChatRequest& request);
std::string request_digest(const VisionRequest& request);

/// Mock key for a chat request: sha256 of the prompt text.
std::string chat_key(const ChatRequest& request);

class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    std::string chat(const ChatRequest& request);
    std::string vision(const VisionRequest& request);

    virtual std::string name() const = 0;
    /// Upper bound on concurrent requests callers should issue.
    virtual std::size_t max_in_flight() const { return 1; }

    void set_audit_log(std::shared_ptr<AuditLog> log) { audit_ = std::move(log); }

protected:
    virtual std::string do_chat(const ChatRequest& request) = 0;
    virtual std::string do_vision(const VisionRequest& request) = 0;

private:
    std::shared_ptr<AuditLog> audit_;
};

/// One scripted response; `error` set means the call fails with that code.
struct MockReply {
    std::string text;
    std::optional<ErrorCode> error;

    static MockReply fail_with(ErrorCode code) { return {{}, code}; }
};

using MockScript = std::map<std::string, std::vector<MockReply>>;

/// Replays scripted responses in order per key. Chat requests are keyed by chat_key(), vision requests by image id.
class MockBackend final : public ModelBackend {
public:
    struct Call {
        std::string kind;  // "chat" or "vision"
        std::string key;
        std::optional<std::string> system_message;
        std::string prompt;
    };

    explicit MockBackend(MockScript script, std::size_t max_in_flight = 1);

    std::string name() const override { return "mock"; }
    std::size_t max_in_flight() const override { return max_in_flight_; }

    std::vector<Call> calls() const;
    std::size_t calls_for(const std::string& key) const;

protected:
    std::string do_chat(const ChatRequest& request) override;
    std::string do_vision(const VisionRequest& request) override;

private:
    std::string next(const std::string& kind, const std::string& key, const std::optional<std::string>& system,
                     const std::string& prompt);

    MockScript script_;
    std::map<std::string, std::size_t> cursor_;
    std::vector<Call> calls_;
    std::size_t max_in_flight_;
    mutable std::mutex mutex_;
};

std::shared_ptr<MockBackend> mock_from_script(MockScript script);

/// Script JSON: {"<key>": ["reply", {"error": "transport"}, ...], ...}
MockScript parse_mock_script(const nlohmann::json& doc);
MockScript load_mock_script(const std::string& path);

/// Backend driven by caller-supplied functions. Used for oracle mocks and dry runs.
class CallbackBackend final : public ModelBackend {
public:
    using ChatFn = std::function<std::string(const ChatRequest&)>;
    using VisionFn = std::function<std::string(const VisionRequest&)>;

    CallbackBackend(ChatFn chat, VisionFn vision = {}, std::size_t max_in_flight = 1);

    std::string name() const override { return "callback"; }
    std::size_t max_in_flight() const override { return max_in_flight_; }

protected:
    std::string do_chat(const ChatRequest& request) override;
    std::string do_vision(const VisionRequest& request) override;

private:
    ChatFn chat_;
    VisionFn vision_;
    std::size_t max_in_flight_;
};

/// Chat-completion HTTP client. Images travel as base64 data URLs inside the user message.
class HttpBackend final : public ModelBackend {
public:
    explicit HttpBackend(BackendConfig config);
    ~HttpBackend() override;

    std::string name() const override { return config_.model_name.empty() ? "http" : config_.model_name; }
    std::size_t max_in_flight() const override { return static_cast<std::size_t>(config_.max_in_flight); }

    /// Total HTTP attempts issued so far, including retries.
    std::uint64_t attempts() const;

    static nlohmann::json chat_payload(const ChatRequest& request, const std::string& model);
    static nlohmann::json vision_payload(const VisionRequest& request, const std::string& model);

protected:
    std::string do_chat(const ChatRequest& request) override;
    std::string do_vision(const VisionRequest& request) override;

private:
    std::string post(const nlohmann::json& payload);
    std::chrono::milliseconds backoff_delay(int attempt);

    struct Impl;
    BackendConfig config_;
    std::unique_ptr<Impl> impl_;
};

/// Builds the backend described by `config`, wiring the audit log when configured.
std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config);

}  // namespace zoosight
