#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zoosight/captioner.hpp"
#include "zoosight/gateway.hpp"
#include "zoosight/knowledge_base.hpp"
#include "zoosight/prompts.hpp"

namespace zoosight {

/// Interleaved 8-bit RGB image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    const std::uint8_t* at(int x, int y) const { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

/// Decodes JPEG/PNG (anything OpenCV reads). Throws DecodeError.
Image load_image(const std::string& path);

inline constexpr int kDefaultColorEpsilon = 10;
inline constexpr double kDefaultCropFraction = 0.8;

struct ColorReport {
    bool low_color_variation = false;
    int max_channel_spread = 0;
    double crop_fraction = kDefaultCropFraction;
    int epsilon = kDefaultColorEpsilon;
};

struct CropWindow {
    int x0, y0, width, height;
};

/// Centered window covering `crop_fraction` of each side (at least one pixel).
CropWindow center_crop(int width, int height, double crop_fraction);

/// Low color variation holds when the largest pairwise channel difference over the center crop is < epsilon.
ColorReport detect_low_color_variation(const Image& image, double crop_fraction = kDefaultCropFraction,
                                       int epsilon = kDefaultColorEpsilon);

ChatRequest render_strip_color_request(const std::string& caption);
std::string strip_color(const std::string& caption, ModelBackend& chat);

ChatRequest render_inject_request(const std::string& caption, const std::string& expert_description);
std::string inject_expert_knowledge(const std::string& caption, const std::string& expert_description,
                                    ModelBackend& chat);

struct ColorPolicy {
    bool enabled = true;
    double crop_fraction = kDefaultCropFraction;
    int epsilon = kDefaultColorEpsilon;
};

struct PseudoCaption {
    std::string image_id;
    std::string base_caption;
    std::string final_caption;
    bool color_filtered = false;
    std::string expert_source_label;
};

/// Color removal (only for low color variation images) followed by expert knowledge injection.
PseudoCaption make_pseudo_caption(const std::string& image_id, const Image& image, const std::string& base_caption,
                                  const SpeciesEntry& kb_entry, ModelBackend& chat, const ColorPolicy& policy = {});

enum class ImagePosition { Before, After };

struct InstructionSample {
    std::string sample_id;
    std::string image_ref;
    std::string instruction;
    std::string response;
    ImagePosition image_position = ImagePosition::Before;

    std::string human_turn() const;
    bool operator==(const InstructionSample&) const = default;
};

InstructionSample make_conversation(const std::string& sample_id, const std::string& image_ref,
                                    const std::string& pseudo_caption, const InstructionPool& pool, Rng& rng);

nlohmann::json dataset_to_json(const std::vector<InstructionSample>& samples);
std::vector<InstructionSample> dataset_from_json(const nlohmann::json& doc);
void emit_dataset(const std::vector<InstructionSample>& samples, const std::string& path);
std::vector<InstructionSample> load_dataset(const std::string& path);

// ---- manual caption helpers --------------------------------------------------

ChatRequest render_feature_list_request(const std::string& expert_description,
                                        std::string_view prompt_template = prompts::kFeatureListPrompt);
std::vector<std::string> parse_feature_list(const std::string& response);
std::vector<std::string> extract_feature_list(const std::string& expert_description, ModelBackend& chat,
                                              std::string_view prompt_template = prompts::kFeatureListPrompt);

enum class Visibility { Full, Partial, None };

Visibility visibility_from_string(const std::string& text);
std::string to_string(Visibility visibility);

struct FeatureVisibility {
    std::string feature;
    Visibility visibility = Visibility::None;
};

ChatRequest render_combine_request(const std::vector<FeatureVisibility>& features,
                                   std::string_view prompt_template = prompts::kFeatureCombinePrompt);
std::string combine_visible_features(const std::vector<FeatureVisibility>& features, bool colors_discernible,
                                     ModelBackend& chat,
                                     std::string_view prompt_template = prompts::kFeatureCombinePrompt);

}  // namespace zoosight
