#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zoosight/captioner.hpp"
#include "zoosight/gateway.hpp"
#include "zoosight/knowledge_base.hpp"
#include "zoosight/matcher.hpp"

namespace zoosight {

/// One line of an image manifest.
struct ManifestEntry {
    std::string image_id;
    std::string path;
    std::optional<std::string> camera_id;
    std::optional<std::string> timestamp;
    std::optional<std::string> sequence_id;
    std::optional<std::string> truth;
    /// Augmentation inputs: an existing caption and the knowledge-base label to inject.
    std::optional<std::string> caption;
    std::optional<std::string> label;
};

/// JSONL {image_id, path, camera_id?, timestamp?, sequence_id?, truth?, caption?, label?}.
/// Relative paths resolve against `base_dir`.
std::vector<ManifestEntry> parse_manifest(const std::string& jsonl, const std::string& base_dir = "");
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct ClassifyOptions {
    int n_samples = kDefaultSamples;
    double caption_temperature = kDefaultCaptionTemperature;
    std::uint64_t seed = 0;
    bool hierarchical = false;
    HierarchyOptions hierarchy;
    InstructionPool pool = InstructionPool::defaults();
};

/// Everything the matcher needs. `store` and `tree` are only consulted for hierarchical runs.
struct ClassifyContext {
    KnowledgeBase kb;
    KbStore store;
    TaxonomyTree tree;

    static ClassifyContext flat(KnowledgeBase kb);
    /// Builds the tree from the fine-grained knowledge base and adds it to the store.
    static ClassifyContext hierarchical(KnowledgeBase leaf_kb, std::vector<KnowledgeBase> rank_kbs);
};

/// Caption sampling followed by flat or hierarchical self-consistent matching. Seeds derive from (seed, image_id).
Prediction classify_image(const ManifestEntry& entry, const ClassifyContext& context, ModelBackend& vision,
                          ModelBackend& chat, const ClassifyOptions& options);

struct ClassifyFailure {
    std::string image_id;
    std::string code;
    std::string message;
};

struct ClassifyResult {
    std::vector<Prediction> predictions;
    std::vector<ClassifyFailure> failures;
};

/// Images are processed in manifest order; per-image failures are collected rather than thrown.
ClassifyResult classify_manifest(const std::vector<ManifestEntry>& entries, const ClassifyContext& context,
                                 ModelBackend& vision, ModelBackend& chat, const ClassifyOptions& options);

}  // namespace zoosight
