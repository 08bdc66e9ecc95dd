#include "zoosight/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "zoosight/util.hpp"

namespace zoosight {

namespace pt = boost::property_tree;

namespace {

using Section = pt::ptree;

const Section* section(const pt::ptree& root, const std::string& name) {
    const auto child = root.get_child_optional(pt::ptree::path_type(name, '\0'));
    return child ? &*child : nullptr;
}

void reject_unknown(const Section& s, const std::string& name, const std::set<std::string>& known) {
    for (const auto& [key, value] : s) {
        if (!known.count(key)) fail(ErrorCode::InvalidConfig, "unknown key '" + key + "' in [" + name + "]");
    }
}

template <typename T>
void read(const Section& s, const std::string& name, const std::string& key, T& out) {
    const auto raw = s.get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!raw) return;
    const auto value = s.get_optional<T>(pt::ptree::path_type(key, '\0'));
    if (!value) fail(ErrorCode::InvalidConfig, "bad value '" + *raw + "' for " + name + "." + key);
    out = *value;
}

std::optional<std::string> read_string(const Section& s, const std::string& key) {
    const auto raw = s.get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!raw || trim(*raw).empty()) return std::nullopt;
    return trim(*raw);
}

std::string resolve(const std::string& path, const std::string& base_dir) {
    if (base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
    return (std::filesystem::path(base_dir) / path).string();
}

std::optional<std::string> env_secret(const Section& s, const std::string& key) {
    const auto var = read_string(s, key);
    if (!var) return std::nullopt;
    const char* value = std::getenv(var->c_str());
    if (!value) fail(ErrorCode::InvalidConfig, "environment variable " + *var + " is not set");
    return std::string(value);
}

BackendConfig read_backend(const Section& s, const std::string& name, const std::string& base_dir) {
    reject_unknown(s, name,
                   {"kind", "base_url", "model", "api_key_env", "max_retries", "max_in_flight", "timeout_ms",
                    "base_backoff_ms", "max_backoff_ms", "deterministic_backoff", "script", "audit_log"});
    BackendConfig config;
    if (const auto kind = read_string(s, "kind")) {
        try {
            config.kind = backend_kind_from_string(*kind);
        } catch (const Error&) {
            fail(ErrorCode::InvalidConfig, "unknown backend kind '" + *kind + "' in [" + name + "]");
        }
    }
    config.base_url = read_string(s, "base_url");
    config.model_name = read_string(s, "model").value_or("");
    config.api_key = env_secret(s, "api_key_env").value_or("");
    // The conventional variables only fill gaps; they never override the file.
    if (config.kind != BackendKind::Mock) {
        if (!config.base_url) {
            if (const char* url = std::getenv("MODEL_BASE_URL")) config.base_url = std::string(url);
        }
        if (config.api_key.empty()) {
            if (const char* key = std::getenv("MODEL_API_KEY")) config.api_key = key;
        }
    }
    read(s, name, "max_retries", config.max_retries);
    read(s, name, "max_in_flight", config.max_in_flight);
    long long ms = config.timeout.count();
    read(s, name, "timeout_ms", ms);
    config.timeout = std::chrono::milliseconds(ms);
    ms = config.base_backoff.count();
    read(s, name, "base_backoff_ms", ms);
    config.base_backoff = std::chrono::milliseconds(ms);
    ms = config.max_backoff.count();
    read(s, name, "max_backoff_ms", ms);
    config.max_backoff = std::chrono::milliseconds(ms);
    read(s, name, "deterministic_backoff", config.deterministic_backoff);
    if (const auto script = read_string(s, "script")) config.script_path = resolve(*script, base_dir);
    if (const auto audit = read_string(s, "audit_log")) config.audit_log_path = resolve(*audit, base_dir);
    config.validate();
    return config;
}

}  // namespace

void PipelineConfig::validate() const {
    auto check = [](bool ok, const std::string& message) {
        if (!ok) fail(ErrorCode::InvalidConfig, message);
    };
    check(n_samples >= 1, "n_samples must be >= 1");
    check(caption_temperature >= 0.0, "caption_temperature must be >= 0");
    check(fanout_limit >= 2, "fanout_limit must be >= 2");
    check(epsilon >= 0, "epsilon must be >= 0");
    check(crop_fraction > 0.0 && crop_fraction <= 1.0, "crop_fraction must lie in (0, 1]");
    check(n_bins >= 1, "n_bins must be >= 1");
    check(sequence_window >= 0.0, "sequence_window must be >= 0");
    check(jobs >= 1, "jobs must be >= 1");
    check(review.port >= 0 && review.port < 65536, "review port out of range");
    check(review.lease_minutes >= 1, "lease_minutes must be >= 1");
    chat.validate();
    vision.validate();
}

PipelineConfig parse_config(const std::string& text, const std::string& base_dir) {
    pt::ptree root;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
    }

    for (const auto& [name, s] : root) {
        if (name != "pipeline" && name != "backend.chat" && name != "backend.vision" && name != "review") {
            fail(ErrorCode::InvalidConfig, "unknown config section [" + name + "]");
        }
    }

    PipelineConfig config;
    if (const auto* s = section(root, "pipeline")) {
        reject_unknown(*s, "pipeline",
                       {"n_samples", "caption_temperature", "fanout_limit", "epsilon", "crop_fraction", "n_bins",
                        "sequence_window", "seed", "jobs", "feature_list_template", "feature_combine_template"});
        read(*s, "pipeline", "n_samples", config.n_samples);
        read(*s, "pipeline", "caption_temperature", config.caption_temperature);
        read(*s, "pipeline", "fanout_limit", config.fanout_limit);
        read(*s, "pipeline", "epsilon", config.epsilon);
        read(*s, "pipeline", "crop_fraction", config.crop_fraction);
        read(*s, "pipeline", "n_bins", config.n_bins);
        read(*s, "pipeline", "sequence_window", config.sequence_window);
        read(*s, "pipeline", "seed", config.seed);
        read(*s, "pipeline", "jobs", config.jobs);
        if (const auto t = read_string(*s, "feature_list_template")) config.feature_list_template = resolve(*t, base_dir);
        if (const auto t = read_string(*s, "feature_combine_template")) {
            config.feature_combine_template = resolve(*t, base_dir);
        }
    }
    if (const auto* s = section(root, "backend.chat")) config.chat = read_backend(*s, "backend.chat", base_dir);
    if (const auto* s = section(root, "backend.vision")) config.vision = read_backend(*s, "backend.vision", base_dir);
    if (const auto* s = section(root, "review")) {
        reject_unknown(*s, "review",
                       {"state_dir", "host", "port", "lease_minutes", "snapshot_every", "token_env", "media_root",
                        "ui_root"});
        if (const auto v = read_string(*s, "state_dir")) config.review.state_dir = resolve(*v, base_dir);
        if (const auto v = read_string(*s, "host")) config.review.host = *v;
        read(*s, "review", "port", config.review.port);
        read(*s, "review", "lease_minutes", config.review.lease_minutes);
        read(*s, "review", "snapshot_every", config.review.snapshot_every);
        config.review.token = env_secret(*s, "token_env");
        if (const auto v = read_string(*s, "media_root")) config.review.media_root = resolve(*v, base_dir);
        if (const auto v = read_string(*s, "ui_root")) config.review.ui_root = resolve(*v, base_dir);
    }
    config.validate();
    return config;
}

PipelineConfig load_config(const std::string& path) {
    return parse_config(read_file(path), std::filesystem::path(path).parent_path().string());
}

}  // namespace zoosight
