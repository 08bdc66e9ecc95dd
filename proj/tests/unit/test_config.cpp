#include <doctest.h>

#include <cstdlib>

#include "support/fixtures.hpp"
#include "zoosight/config.hpp"

using namespace zoosight;

namespace {

ErrorCode config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Empty;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("defaults when empty") {
        const auto c = parse_config("");
        CHECK(c.n_samples == kDefaultSamples);
        CHECK(c.fanout_limit == kDefaultFanoutLimit);
        CHECK(c.epsilon == kDefaultColorEpsilon);
        CHECK(c.chat.kind == BackendKind::Mock);
        CHECK(c.review.port == 8080);
        CHECK_FALSE(c.review.token);
    }

    TEST_CASE("sections, paths and secrets") {
        ::setenv("ZOOSIGHT_TEST_KEY", "k-123", 1);
        ::setenv("ZOOSIGHT_TEST_TOKEN", "t-456", 1);
        const auto c = parse_config(R"(
[pipeline]
n_samples = 7
seed = 42
jobs = 3
crop_fraction = 0.5
feature_list_template = templates/list.txt

[backend.chat]
kind = http-chat
base_url = http://localhost:9000/v1
model = some-model
api_key_env = ZOOSIGHT_TEST_KEY
max_retries = 5
timeout_ms = 2500

[backend.vision]
kind = mock
script = scripts/vision.json

[review]
port = 0
lease_minutes = 3
token_env = ZOOSIGHT_TEST_TOKEN
state_dir = /var/state
)",
                                    "/etc/zoo");
        CHECK(c.n_samples == 7);
        CHECK(c.seed == 42);
        CHECK(c.jobs == 3);
        CHECK(c.crop_fraction == 0.5);
        CHECK(c.feature_list_template == "/etc/zoo/templates/list.txt");
        CHECK(c.chat.kind == BackendKind::HttpChat);
        CHECK(c.chat.base_url == "http://localhost:9000/v1");
        CHECK(c.chat.model_name == "some-model");
        CHECK(c.chat.api_key == "k-123");
        CHECK(c.chat.max_retries == 5);
        CHECK(c.chat.timeout == std::chrono::milliseconds(2500));
        CHECK(c.vision.script_path == "/etc/zoo/scripts/vision.json");
        CHECK(c.review.port == 0);
        CHECK(c.review.lease_minutes == 3);
        CHECK(c.review.token == "t-456");
        CHECK(c.review.state_dir == "/var/state");
    }

    TEST_CASE("conventional environment variables only fill gaps") {
        ::setenv("MODEL_BASE_URL", "http://env:1/v1", 1);
        ::setenv("MODEL_API_KEY", "env-key", 1);
        const auto from_env = parse_config("[backend.chat]\nkind = http-chat\n");
        CHECK(from_env.chat.base_url == "http://env:1/v1");
        CHECK(from_env.chat.api_key == "env-key");
        const auto from_file = parse_config("[backend.chat]\nkind = http-chat\nbase_url = http://file:2/v1\n");
        CHECK(from_file.chat.base_url == "http://file:2/v1");
        ::unsetenv("MODEL_BASE_URL");
        ::unsetenv("MODEL_API_KEY");
        CHECK(config_error("[backend.chat]\nkind = http-chat\n") == ErrorCode::InvalidConfig);
    }

    TEST_CASE("invalid configs") {
        CHECK(config_error("[pipeline]\nn_samples = 0\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[pipeline]\nn_samples = many\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[pipeline]\nfanout_limit = 1\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[pipeline]\ncrop_fraction = 1.5\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[pipeline]\nunknown = 1\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[extra]\na = 1\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[backend.chat]\nkind = carrier-pigeon\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[backend.chat]\napi_key_env = ZOOSIGHT_SURELY_UNSET_VAR\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[backend.chat]\nmax_in_flight = 0\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("[review]\nport = 70000\n") == ErrorCode::InvalidConfig);
        CHECK(config_error("not an ini [") == ErrorCode::InvalidConfig);
    }

    TEST_CASE("load_config resolves against the file's directory") {
        test::TempDir dir;
        write_file(dir.file("zoo.ini"), "[backend.chat]\nscript = chat.json\n");
        CHECK(load_config(dir.file("zoo.ini")).chat.script_path == dir.file("chat.json"));
    }
}
