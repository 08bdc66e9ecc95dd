#include "zoosight/augmenter.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>

#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

Image::Image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) : width(w), height(h) {
    require(w > 0 && h > 0, "image dimensions must be positive");
    rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
}

void Image::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    require(x >= 0 && x < width && y >= 0 && y < height, "pixel out of bounds");
    auto* p = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
}

Image load_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) fail(ErrorCode::DecodeError, "cannot decode image " + path);
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image image;
    image.width = rgb.cols;
    image.height = rgb.rows;
    image.rgb.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<std::uint8_t>(y);
        std::copy(row, row + rgb.cols * 3, image.rgb.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
    }
    return image;
}

// ---- color condition -----------------------------------------------------------

CropWindow center_crop(int width, int height, double crop_fraction) {
    require(crop_fraction > 0.0 && crop_fraction <= 1.0, "crop_fraction must be in (0, 1]");
    require(width > 0 && height > 0, "image must be non-empty");
    const int cw = std::clamp(static_cast<int>(std::lround(width * crop_fraction)), 1, width);
    const int ch = std::clamp(static_cast<int>(std::lround(height * crop_fraction)), 1, height);
    return {(width - cw) / 2, (height - ch) / 2, cw, ch};
}

ColorReport detect_low_color_variation(const Image& image, double crop_fraction, int epsilon) {
    require(image.width > 0 && image.height > 0 && image.rgb.size() == static_cast<std::size_t>(image.width) *
                                                                           image.height * 3,
            "image buffer does not match its dimensions");
    const CropWindow crop = center_crop(image.width, image.height, crop_fraction);
    int spread = 0;
    for (int y = crop.y0; y < crop.y0 + crop.height; ++y) {
        for (int x = crop.x0; x < crop.x0 + crop.width; ++x) {
            const std::uint8_t* p = image.at(x, y);
            const int r = p[0], g = p[1], b = p[2];
            spread = std::max({spread, std::abs(r - g), std::abs(r - b), std::abs(b - g)});
        }
    }
    return {spread < epsilon, spread, crop_fraction, epsilon};
}

// ---- knowledge augmentation -------------------------------------------------------

ChatRequest render_strip_color_request(const std::string& caption) {
    require(!trim(caption).empty(), "strip_color: caption must be non-empty");
    ChatRequest request;
    request.prompt = replace_all(prompts::kStripColorPrompt, prompts::kLmmCaption, caption);
    return request;
}

std::string strip_color(const std::string& caption, ModelBackend& chat) {
    return trim(chat.chat(render_strip_color_request(caption)));
}

ChatRequest render_inject_request(const std::string& caption, const std::string& expert_description) {
    require(!trim(caption).empty(), "inject_expert_knowledge: caption must be non-empty");
    require(!trim(expert_description).empty(), "inject_expert_knowledge: expert description must be non-empty");
    ChatRequest request;
    request.system_message = std::string(prompts::kInjectSystem);
    request.prompt = substitute(prompts::kInjectPrompt,
                                {{prompts::kExpertDescr, expert_description}, {prompts::kLmmCaption, caption}});
    return request;
}

std::string inject_expert_knowledge(const std::string& caption, const std::string& expert_description,
                                    ModelBackend& chat) {
    return trim(chat.chat(render_inject_request(caption, expert_description)));
}

PseudoCaption make_pseudo_caption(const std::string& image_id, const Image& image, const std::string& base_caption,
                                  const SpeciesEntry& kb_entry, ModelBackend& chat, const ColorPolicy& policy) {
    require(!trim(kb_entry.description).empty(), "make_pseudo_caption: knowledge base entry has no description");
    require(!trim(base_caption).empty(), "make_pseudo_caption: base caption must be non-empty");

    PseudoCaption out;
    out.image_id = image_id;
    out.base_caption = base_caption;
    out.expert_source_label = kb_entry.label;

    std::string caption = base_caption;
    if (policy.enabled && detect_low_color_variation(image, policy.crop_fraction, policy.epsilon).low_color_variation) {
        caption = strip_color(caption, chat);
        out.color_filtered = true;
        if (caption.empty()) fail(ErrorCode::MalformedResponse, "color removal returned an empty caption");
    }
    out.final_caption = inject_expert_knowledge(caption, kb_entry.description, chat);
    if (out.final_caption.empty()) fail(ErrorCode::MalformedResponse, "knowledge injection returned an empty caption");
    return out;
}

// ---- instruction tuning data --------------------------------------------------------

namespace {
constexpr std::string_view kImageToken = "<image>";
}

std::string InstructionSample::human_turn() const {
    if (image_position == ImagePosition::Before) return std::string(kImageToken) + "\n" + instruction;
    return instruction + "\n" + std::string(kImageToken);
}

InstructionSample make_conversation(const std::string& sample_id, const std::string& image_ref,
                                    const std::string& pseudo_caption, const InstructionPool& pool, Rng& rng) {
    require(!trim(pseudo_caption).empty(), "make_conversation: pseudo-caption must be non-empty");
    InstructionSample sample;
    sample.sample_id = sample_id;
    sample.image_ref = image_ref;
    sample.instruction = pick_instruction(pool, rng).text;
    sample.image_position = fair_coin(rng) ? ImagePosition::After : ImagePosition::Before;
    sample.response = pseudo_caption;
    return sample;
}

json dataset_to_json(const std::vector<InstructionSample>& samples) {
    std::set<std::string> ids;
    json out = json::array();
    for (const auto& s : samples) {
        if (!ids.insert(s.sample_id).second) fail(ErrorCode::DuplicateId, "duplicate sample id '" + s.sample_id + "'");
        out.push_back({{"id", s.sample_id},
                       {"image", s.image_ref},
                       {"conversations",
                        json::array({{{"from", "human"}, {"value", s.human_turn()}},
                                     {{"from", "assistant"}, {"value", s.response}}})}});
    }
    return out;
}

std::vector<InstructionSample> dataset_from_json(const json& doc) {
    std::vector<InstructionSample> samples;
    const std::string before = std::string(kImageToken) + "\n";
    const std::string after = "\n" + std::string(kImageToken);
    for (const auto& record : doc) {
        InstructionSample s;
        s.sample_id = record.at("id").get<std::string>();
        s.image_ref = record.at("image").get<std::string>();
        const auto& turns = record.at("conversations");
        if (turns.size() != 2) fail(ErrorCode::IoError, "sample " + s.sample_id + " is not single-turn");
        const std::string human = turns.at(0).at("value").get<std::string>();
        if (human.starts_with(before)) {
            s.image_position = ImagePosition::Before;
            s.instruction = human.substr(before.size());
        } else if (human.ends_with(after)) {
            s.image_position = ImagePosition::After;
            s.instruction = human.substr(0, human.size() - after.size());
        } else {
            fail(ErrorCode::IoError, "sample " + s.sample_id + " has no image token");
        }
        s.response = turns.at(1).at("value").get<std::string>();
        samples.push_back(std::move(s));
    }
    return samples;
}

void emit_dataset(const std::vector<InstructionSample>& samples, const std::string& path) {
    write_file(path, dataset_to_json(samples).dump(2) + "\n");
}

std::vector<InstructionSample> load_dataset(const std::string& path) {
    try {
        return dataset_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        fail(ErrorCode::IoError, "malformed dataset " + path + ": " + e.what());
    }
}

// ---- manual caption helpers -------------------------------------------------------

ChatRequest render_feature_list_request(const std::string& expert_description, std::string_view prompt_template) {
    require(!trim(expert_description).empty(), "extract_feature_list: description must be non-empty");
    ChatRequest request;
    request.system_message = std::string(prompts::kSummarizeSystem);
    request.prompt = replace_all(prompt_template, prompts::kExpertDescr, expert_description);
    return request;
}

std::vector<std::string> parse_feature_list(const std::string& response) {
    std::vector<std::string> features;
    for (const auto& line : split(response, '\n')) {
        std::string item = trim(line);
        if (item.starts_with("\xE2\x80\xA2")) item = trim(item.substr(3));  // U+2022 bullet
        else if (!item.empty() && (item[0] == '-' || item[0] == '*')) item = trim(item.substr(1));
        else {
            std::size_t digits = 0;
            while (digits < item.size() && std::isdigit(static_cast<unsigned char>(item[digits]))) ++digits;
            if (digits > 0 && digits < item.size() && (item[digits] == '.' || item[digits] == ')')) {
                item = trim(item.substr(digits + 1));
            }
        }
        if (!item.empty()) features.push_back(std::move(item));
    }
    return features;
}

std::vector<std::string> extract_feature_list(const std::string& expert_description, ModelBackend& chat,
                                              std::string_view prompt_template) {
    auto features = parse_feature_list(chat.chat(render_feature_list_request(expert_description, prompt_template)));
    if (features.empty()) fail(ErrorCode::EmptyFeatureList, "backend returned no features");
    return features;
}

Visibility visibility_from_string(const std::string& text) {
    const std::string key = to_lower(trim(text));
    if (key == "full" || key == "fully visible") return Visibility::Full;
    if (key == "partial" || key == "partially visible") return Visibility::Partial;
    if (key == "none" || key == "not visible") return Visibility::None;
    fail(ErrorCode::Precondition, "unknown visibility '" + text + "'");
}

std::string to_string(Visibility visibility) {
    switch (visibility) {
        case Visibility::Full: return "full";
        case Visibility::Partial: return "partial";
        case Visibility::None: return "none";
    }
    return "none";
}

ChatRequest render_combine_request(const std::vector<FeatureVisibility>& features, std::string_view prompt_template) {
    std::vector<std::string> lines;
    for (const auto& f : features) {
        if (f.visibility == Visibility::Full) lines.push_back("- " + f.feature);
        if (f.visibility == Visibility::Partial) lines.push_back("- " + f.feature + " (partially visible)");
    }
    if (lines.empty()) fail(ErrorCode::NoVisibleFeatures, "no feature is marked visible");
    ChatRequest request;
    request.system_message = std::string(prompts::kSummarizeSystem);
    request.prompt = replace_all(prompt_template, prompts::kFeatureList, join(lines, "\n"));
    return request;
}

std::string combine_visible_features(const std::vector<FeatureVisibility>& features, bool colors_discernible,
                                     ModelBackend& chat, std::string_view prompt_template) {
    std::string caption = trim(chat.chat(render_combine_request(features, prompt_template)));
    if (caption.empty()) fail(ErrorCode::MalformedResponse, "backend returned an empty caption");
    if (!colors_discernible) caption = strip_color(caption, chat);
    return caption;
}

}  // namespace zoosight
