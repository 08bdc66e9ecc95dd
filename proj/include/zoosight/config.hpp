#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "zoosight/augmenter.hpp"
#include "zoosight/captioner.hpp"
#include "zoosight/evaluator.hpp"
#include "zoosight/gateway.hpp"
#include "zoosight/matcher.hpp"

namespace zoosight {

struct ReviewConfig {
    std::string state_dir = "review-state";
    std::string host = "127.0.0.1";
    int port = 8080;
    int lease_minutes = 10;
    std::size_t snapshot_every = 64;
    std::optional<std::string> token;
    std::optional<std::string> media_root;
    std::optional<std::string> ui_root;
};

struct PipelineConfig {
    BackendConfig chat;
    BackendConfig vision;
    int n_samples = kDefaultSamples;
    double caption_temperature = kDefaultCaptionTemperature;
    int fanout_limit = kDefaultFanoutLimit;
    int epsilon = kDefaultColorEpsilon;
    double crop_fraction = kDefaultCropFraction;
    int n_bins = kDefaultBins;
    double sequence_window = kDefaultSequenceWindowSeconds;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    /// Overrides for the authored manual-caption templates.
    std::optional<std::string> feature_list_template;
    std::optional<std::string> feature_combine_template;
    ReviewConfig review;

    void validate() const;
};

/// INI text with [pipeline], [backend.chat], [backend.vision] and [review] sections.
/// Secrets are never read from the file itself: `api_key_env` / `token_env` name environment variables.
/// Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::string& base_dir = "");
PipelineConfig load_config(const std::string& path);

}  // namespace zoosight
