#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosight/gateway.hpp"

namespace zoosight {

enum class Rank { Class = 0, Order = 1, Family = 2, Genus = 3, Species = 4 };

inline constexpr Rank kAllRanks[] = {Rank::Class, Rank::Order, Rank::Family, Rank::Genus, Rank::Species};

std::string to_string(Rank rank);
Rank rank_from_string(const std::string& text);

// ---- data --------------------------------------------------------------------

struct ArticleSection {
    std::string heading;
    std::string body;
};

struct RawArticle {
    std::string title;
    std::string summary;
    std::vector<ArticleSection> sections;
    std::string source_url;
    std::string fetched_at;

    void validate() const;
};

struct SpeciesEntry {
    std::string label;
    std::map<Rank, std::string> taxonomy;
    std::string description;
    std::string source_url;
    std::string fetched_at;

    bool operator==(const SpeciesEntry&) const = default;
};

struct KnowledgeBase {
    Rank rank = Rank::Species;
    std::vector<SpeciesEntry> entries;

    /// Unique labels, non-empty descriptions, and taxonomy paths that are contiguous from `class` when present.
    void validate() const;
    std::vector<std::string> labels() const;
    const SpeciesEntry* find(const std::string& label) const;
    bool empty() const { return entries.empty(); }

    bool operator==(const KnowledgeBase&) const = default;
};

inline constexpr int kKnowledgeBaseVersion = 1;

nlohmann::json to_json(const KnowledgeBase& kb);
KnowledgeBase knowledge_base_from_json(const nlohmann::json& doc);
KnowledgeBase load_knowledge_base(const std::string& path);
void save_knowledge_base(const KnowledgeBase& kb, const std::string& path);

/// One knowledge base per taxonomic rank.
using KbStore = std::map<Rank, KnowledgeBase>;

KbStore make_store(std::vector<KnowledgeBase> kbs);

// ---- taxonomy ----------------------------------------------------------------

class TaxonomyTree {
public:
    using NodeId = std::size_t;

    struct Node {
        Rank rank;
        std::string name;
        std::optional<NodeId> parent;
        std::vector<NodeId> children;
        /// Set when the node is a fine-grained category (a knowledge-base label).
        bool is_label = false;
    };

    bool empty() const { return nodes_.empty(); }
    std::size_t size() const { return nodes_.size(); }

    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::optional<NodeId> find(Rank rank, const std::string& name) const;

    /// Children of a node, or the class-rank roots for std::nullopt. Insertion order.
    const std::vector<NodeId>& children(std::optional<NodeId> parent) const;

    /// Fine-grained labels under a node (inclusive), in insertion order. std::nullopt means the whole tree.
    std::vector<NodeId> labels_under(std::optional<NodeId> parent) const;
    std::vector<std::string> leaf_labels() const;

    bool is_ancestor(NodeId ancestor, NodeId node) const;

    NodeId add(Rank rank, const std::string& name, std::optional<NodeId> parent);
    void mark_label(NodeId id) { nodes_.at(id).is_label = true; }

private:
    std::vector<Node> nodes_;
    std::vector<NodeId> roots_;
    std::map<std::pair<Rank, std::string>, NodeId> index_;
};

/// Builds the tree from entry taxonomy paths. Absent intermediate ranks are skipped.
/// The finest rank of each path is named by the entry label.
TaxonomyTree build_taxonomy(const std::vector<SpeciesEntry>& entries);

/// Knowledge base restricted to the children of `parent` that live at `rank`. std::nullopt parent selects classes.
KnowledgeBase kb_for_rank(const TaxonomyTree& tree, const KbStore& store, Rank rank,
                          std::optional<std::pair<Rank, std::string>> parent);

// ---- ingestion ---------------------------------------------------------------

class ArticleProvider {
public:
    virtual ~ArticleProvider() = default;
    virtual RawArticle get(const std::string& species_name) = 0;
};

/// Reads pre-fetched articles from `<dir>/<slug>.json` where slug lowercases and replaces spaces with '_'.
class FileArticleProvider final : public ArticleProvider {
public:
    explicit FileArticleProvider(std::filesystem::path dir);
    RawArticle get(const std::string& species_name) override;

    static std::string slug(const std::string& species_name);

private:
    std::filesystem::path dir_;
};

nlohmann::json to_json(const RawArticle& article);
RawArticle article_from_json(const nlohmann::json& doc);

RawArticle fetch_article(const std::string& species_name, ArticleProvider& provider);

inline const std::vector<std::string>& visual_section_keywords() {
    static const std::vector<std::string> keywords = {"description", "characteristics", "appearance", "anatomy"};
    return keywords;
}

std::string extract_visual_sections(const RawArticle& article);

ChatRequest render_summary_request(const std::string& text);
std::string summarize_visual(const std::string& text, ModelBackend& chat);

/// Measurement units that survived summarization, e.g. "12 cm". Empty when clean.
std::vector<std::string> audit_measurements(const std::string& description);

/// A row of the species list: label plus known taxonomy.
struct SpeciesRow {
    std::string label;
    std::map<Rank, std::string> taxonomy;
    /// Article title to fetch; defaults to the label.
    std::string article_name;
};

/// Newline-delimited labels, or CSV with a header containing `label` and rank columns (optional `article`).
std::vector<SpeciesRow> parse_species_list(const std::string& contents);

struct KbBuildOptions {
    Rank rank = Rank::Species;
    std::size_t jobs = 1;
    /// Called with (label, message) when a summary still mentions measurements.
    std::function<void(const std::string&, const std::string&)> warn;
};

KnowledgeBase build_knowledge_base(const std::vector<SpeciesRow>& rows, ArticleProvider& provider, ModelBackend& chat,
                                   const KbBuildOptions& options);

}  // namespace zoosight
