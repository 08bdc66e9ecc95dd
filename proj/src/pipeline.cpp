#include "zoosight/pipeline.hpp"

#include <filesystem>

#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

namespace {

std::optional<std::string> text_field(const json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    const auto& v = doc.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& jsonl, const std::string& base_dir) {
    std::vector<ManifestEntry> entries;
    std::size_t line_no = 0;
    for (const auto& line : split(jsonl, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            ManifestEntry e;
            e.image_id = doc.at("image_id").get<std::string>();
            e.path = doc.at("path").get<std::string>();
            if (!base_dir.empty() && std::filesystem::path(e.path).is_relative()) {
                e.path = (std::filesystem::path(base_dir) / e.path).string();
            }
            e.camera_id = text_field(doc, "camera_id");
            e.timestamp = text_field(doc, "timestamp");
            e.sequence_id = text_field(doc, "sequence_id");
            e.truth = text_field(doc, "truth");
            if (e.truth) e.truth = to_lower(trim(*e.truth));
            e.caption = text_field(doc, "caption");
            e.label = text_field(doc, "label");
            require(!e.image_id.empty(), "manifest line " + std::to_string(line_no) + " has an empty image_id");
            entries.push_back(std::move(e));
        } catch (const json::exception& ex) {
            fail(ErrorCode::Precondition, "manifest line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return entries;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    return parse_manifest(read_file(path), std::filesystem::path(path).parent_path().string());
}

ClassifyContext ClassifyContext::flat(KnowledgeBase kb) {
    ClassifyContext context;
    kb.validate();
    context.kb = std::move(kb);
    return context;
}

ClassifyContext ClassifyContext::hierarchical(KnowledgeBase leaf_kb, std::vector<KnowledgeBase> rank_kbs) {
    ClassifyContext context;
    leaf_kb.validate();
    context.tree = build_taxonomy(leaf_kb.entries);
    // Fine-grained labels live in the store under the rank of their tree node.
    for (auto& kb : rank_kbs) {
        kb.validate();
        const Rank rank = kb.rank;
        auto& slot = context.store[rank];
        slot.rank = rank;
        for (auto& entry : kb.entries) slot.entries.push_back(std::move(entry));
    }
    for (const auto& entry : leaf_kb.entries) {
        const Rank rank = entry.taxonomy.rbegin()->first;
        auto& slot = context.store[rank];
        slot.rank = rank;
        if (!slot.find(entry.label)) slot.entries.push_back(entry);
    }
    context.kb = std::move(leaf_kb);
    return context;
}

Prediction classify_image(const ManifestEntry& entry, const ClassifyContext& context, ModelBackend& vision,
                          ModelBackend& chat, const ClassifyOptions& options) {
    CaptionOptions caption_options{options.n_samples, options.caption_temperature,
                                   derive_seed(options.seed, entry.image_id)};
    CaptionSet captions;
    try {
        captions = sample_captions({entry.image_id, entry.path}, options.pool, vision, caption_options);
    } catch (const PartialCaptions& partial) {
        captions = partial.partial();
    }

    Prediction prediction = options.hierarchical
                                ? hierarchical_predict(captions, context.tree, context.store, chat, options.hierarchy)
                                : self_consistent_predict(captions, context.kb, chat, options.hierarchy.match);
    prediction.image = entry.path;
    prediction.camera_id = entry.camera_id;
    prediction.timestamp = entry.timestamp;
    prediction.sequence_id = entry.sequence_id;
    prediction.truth = entry.truth;
    return prediction;
}

ClassifyResult classify_manifest(const std::vector<ManifestEntry>& entries, const ClassifyContext& context,
                                 ModelBackend& vision, ModelBackend& chat, const ClassifyOptions& options) {
    ClassifyResult result;
    for (const auto& entry : entries) {
        try {
            result.predictions.push_back(classify_image(entry, context, vision, chat, options));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Precondition || e.code() == ErrorCode::InvalidConfig) throw;
            result.failures.push_back({entry.image_id, std::string(code_name(e.code())), e.what()});
        }
    }
    return result;
}

}  // namespace zoosight
