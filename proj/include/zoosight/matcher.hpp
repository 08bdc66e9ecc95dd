#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosight/captioner.hpp"
#include "zoosight/gateway.hpp"
#include "zoosight/knowledge_base.hpp"

namespace zoosight {

struct VoteMultiset {
    std::map<std::string, int> counts;
    int n_attempted = 0;
    int n_valid = 0;

    void add(const std::string& label, int count = 1);
    void merge(const VoteMultiset& other);
    bool operator==(const VoteMultiset&) const = default;
};

/// One stage of a hierarchical descent.
struct PathStep {
    Rank rank = Rank::Species;
    std::string label;
    double confidence = 0.0;
    VoteMultiset votes;
    bool operator==(const PathStep&) const = default;
};

/// A classified image. This is also the prediction-log record.
struct Prediction {
    std::string image_id;
    std::string label;
    double confidence = 0.0;
    VoteMultiset votes;
    std::vector<PathStep> path;
    std::optional<std::string> truth;

    // Carried through from the manifest.
    std::vector<std::string> captions;
    std::optional<std::string> image;
    std::optional<std::string> camera_id;
    std::optional<std::string> timestamp;
    std::optional<std::string> sequence_id;

    bool correct() const { return truth && *truth == label; }
    bool operator==(const Prediction&) const = default;
};

nlohmann::json to_json(const Prediction& prediction);
Prediction prediction_from_json(const nlohmann::json& doc);
std::string to_jsonl(const std::vector<Prediction>& predictions);
std::vector<Prediction> parse_prediction_log(const std::string& contents);
std::vector<Prediction> load_prediction_log(const std::string& path);
void write_prediction_log(const std::vector<Prediction>& predictions, const std::string& path);

// ---- matching ----------------------------------------------------------------------

ChatRequest render_matching_prompt(const std::string& caption, const KnowledgeBase& kb);

/// Lowercase, trim, drop punctuation and articles; exact label match first, then a unique whole-word containment match.
std::string normalize_answer(const std::string& raw, const std::vector<std::string>& valid_labels);

struct MatchOptions {
    /// Extra attempts after an off-list or ambiguous answer.
    int retries = 1;
};

std::string match_description(const std::string& caption, const KnowledgeBase& kb, ModelBackend& chat,
                              const MatchOptions& options = {});

/// Label with the maximal count; ties go to the lexicographically smallest label.
std::pair<std::string, int> majority_vote(const std::vector<std::string>& labels);
std::pair<std::string, int> majority_vote(const std::map<std::string, int>& counts);

/// Matches every caption independently and votes. Failed matches count toward n_attempted only.
Prediction self_consistent_predict(const CaptionSet& captions, const KnowledgeBase& kb, ModelBackend& chat,
                                   const MatchOptions& options = {});

inline constexpr int kDefaultFanoutLimit = 10;

struct HierarchyOptions {
    int fanout_limit = kDefaultFanoutLimit;
    MatchOptions match;
};

/// Knowledge base for the children of a node (classes for std::nullopt), whatever their rank.
KnowledgeBase kb_for_children(const TaxonomyTree& tree, const KbStore& store,
                              std::optional<TaxonomyTree::NodeId> parent);

/// Knowledge base of the fine-grained labels under a node.
KnowledgeBase kb_for_labels(const TaxonomyTree& tree, const KbStore& store,
                            std::optional<TaxonomyTree::NodeId> parent);

/// Descends the taxonomy until at most `fanout_limit` fine-grained labels remain, then matches them directly.
/// The returned confidence is the final stage's.
Prediction hierarchical_predict(const CaptionSet& captions, const TaxonomyTree& tree, const KbStore& store,
                                ModelBackend& chat, const HierarchyOptions& options = {});

}  // namespace zoosight
