#include "zoosight/knowledge_base.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "zoosight/prompts.hpp"
#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

std::string to_string(Rank rank) {
    switch (rank) {
        case Rank::Class: return "class";
        case Rank::Order: return "order";
        case Rank::Family: return "family";
        case Rank::Genus: return "genus";
        case Rank::Species: return "species";
    }
    return "species";
}

Rank rank_from_string(const std::string& text) {
    const std::string key = to_lower(trim(text));
    for (Rank rank : kAllRanks) {
        if (to_string(rank) == key) return rank;
    }
    fail(ErrorCode::Precondition, "unknown taxonomic rank '" + text + "'");
}

void RawArticle::validate() const {
    require(!trim(title).empty(), "article title must be non-empty");
    for (const auto& section : sections) {
        require(!trim(section.heading).empty(), "article '" + title + "' has a section without heading");
    }
}

// ---- knowledge base ----------------------------------------------------------

void KnowledgeBase::validate() const {
    std::set<std::string> seen;
    for (const auto& entry : entries) {
        require(!entry.label.empty(), "knowledge base entry without label");
        require(seen.insert(entry.label).second, "duplicate knowledge base label '" + entry.label + "'");
        require(!trim(entry.description).empty(), "empty description for '" + entry.label + "'");
        if (entry.taxonomy.empty()) continue;
        require(entry.taxonomy.contains(Rank::Class), "taxonomy of '" + entry.label + "' lacks a class");
        for (const auto& [rank, name] : entry.taxonomy) {
            require(!trim(name).empty(), "empty " + to_string(rank) + " name for '" + entry.label + "'");
        }
    }
}

std::vector<std::string> KnowledgeBase::labels() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& entry : entries) out.push_back(entry.label);
    return out;
}

const SpeciesEntry* KnowledgeBase::find(const std::string& label) const {
    for (const auto& entry : entries) {
        if (entry.label == label) return &entry;
    }
    return nullptr;
}

json to_json(const KnowledgeBase& kb) {
    json entries = json::array();
    for (const auto& entry : kb.entries) {
        json taxonomy = json::object();
        for (const auto& [rank, name] : entry.taxonomy) taxonomy[to_string(rank)] = name;
        entries.push_back({{"label", entry.label},
                           {"taxonomy", taxonomy},
                           {"description", entry.description},
                           {"source_url", entry.source_url},
                           {"fetched_at", entry.fetched_at}});
    }
    return {{"version", kKnowledgeBaseVersion}, {"rank", to_string(kb.rank)}, {"entries", entries}};
}

KnowledgeBase knowledge_base_from_json(const json& doc) {
    try {
        const int version = doc.at("version").get<int>();
        if (version != kKnowledgeBaseVersion) {
            fail(ErrorCode::Precondition, "unsupported knowledge base version " + std::to_string(version));
        }
        KnowledgeBase kb;
        kb.rank = rank_from_string(doc.at("rank").get<std::string>());
        for (const auto& item : doc.at("entries")) {
            SpeciesEntry entry;
            entry.label = item.at("label").get<std::string>();
            entry.description = item.at("description").get<std::string>();
            entry.source_url = item.value("source_url", "");
            entry.fetched_at = item.value("fetched_at", "");
            if (item.contains("taxonomy")) {
                for (const auto& [rank, name] : item.at("taxonomy").items()) {
                    entry.taxonomy[rank_from_string(rank)] = name.get<std::string>();
                }
            }
            kb.entries.push_back(std::move(entry));
        }
        kb.validate();
        return kb;
    } catch (const json::exception& e) {
        fail(ErrorCode::Precondition, std::string("malformed knowledge base: ") + e.what());
    }
}

KnowledgeBase load_knowledge_base(const std::string& path) {
    try {
        return knowledge_base_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Precondition, "cannot parse knowledge base " + path + ": " + e.what());
    }
}

void save_knowledge_base(const KnowledgeBase& kb, const std::string& path) {
    write_file(path, to_json(kb).dump(2) + "\n");
}

KbStore make_store(std::vector<KnowledgeBase> kbs) {
    KbStore store;
    for (auto& kb : kbs) {
        const Rank rank = kb.rank;
        require(!store.contains(rank), "two knowledge bases for rank " + to_string(rank));
        store.emplace(rank, std::move(kb));
    }
    return store;
}

// ---- taxonomy ----------------------------------------------------------------

std::optional<TaxonomyTree::NodeId> TaxonomyTree::find(Rank rank, const std::string& name) const {
    const auto it = index_.find({rank, name});
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::vector<TaxonomyTree::NodeId>& TaxonomyTree::children(std::optional<NodeId> parent) const {
    return parent ? nodes_.at(*parent).children : roots_;
}

std::vector<TaxonomyTree::NodeId> TaxonomyTree::labels_under(std::optional<NodeId> parent) const {
    std::vector<NodeId> out;
    std::vector<NodeId> stack;
    if (parent) {
        stack.push_back(*parent);
    } else {
        stack.assign(roots_.rbegin(), roots_.rend());
    }
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        const Node& n = nodes_[id];
        if (n.is_label) out.push_back(id);
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

std::vector<std::string> TaxonomyTree::leaf_labels() const {
    std::vector<std::string> out;
    for (NodeId id : labels_under(std::nullopt)) out.push_back(nodes_[id].name);
    return out;
}

bool TaxonomyTree::is_ancestor(NodeId ancestor, NodeId node) const {
    std::optional<NodeId> cursor = nodes_.at(node).parent;
    while (cursor) {
        if (*cursor == ancestor) return true;
        cursor = nodes_[*cursor].parent;
    }
    return false;
}

TaxonomyTree::NodeId TaxonomyTree::add(Rank rank, const std::string& name, std::optional<NodeId> parent) {
    if (const auto existing = find(rank, name)) {
        if (nodes_[*existing].parent != parent) {
            auto describe = [&](std::optional<NodeId> p) {
                return p ? to_string(nodes_[*p].rank) + ":" + nodes_[*p].name : std::string("<root>");
            };
            fail(ErrorCode::InconsistentTaxonomy, to_string(rank) + ":" + name + " appears under both " +
                                                      describe(nodes_[*existing].parent) + " and " +
                                                      describe(parent));
        }
        return *existing;
    }
    if (parent) require(nodes_.at(*parent).rank < rank, "child rank must be finer than its parent");
    const NodeId id = nodes_.size();
    nodes_.push_back({rank, name, parent, {}, false});
    index_.emplace(std::make_pair(rank, name), id);
    (parent ? nodes_[*parent].children : roots_).push_back(id);
    return id;
}

TaxonomyTree build_taxonomy(const std::vector<SpeciesEntry>& entries) {
    TaxonomyTree tree;
    for (const auto& entry : entries) {
        if (!entry.taxonomy.contains(Rank::Class)) {
            fail(ErrorCode::InconsistentTaxonomy, "taxonomy of '" + entry.label + "' lacks a class");
        }
        std::optional<TaxonomyTree::NodeId> parent;
        const Rank finest = entry.taxonomy.rbegin()->first;
        for (const auto& [rank, name] : entry.taxonomy) {
            parent = tree.add(rank, rank == finest ? entry.label : name, parent);
        }
        tree.mark_label(*parent);
    }
    return tree;
}

KnowledgeBase kb_for_rank(const TaxonomyTree& tree, const KbStore& store, Rank rank,
                          std::optional<std::pair<Rank, std::string>> parent) {
    std::optional<TaxonomyTree::NodeId> parent_id;
    if (parent) {
        parent_id = tree.find(parent->first, parent->second);
        if (!parent_id) {
            fail(ErrorCode::UnknownParent, to_string(parent->first) + ":" + parent->second + " is not in the tree");
        }
    }
    KnowledgeBase kb;
    kb.rank = rank;
    const auto store_it = store.find(rank);
    for (const auto child : tree.children(parent_id)) {
        const auto& node = tree.node(child);
        if (node.rank != rank) continue;
        const SpeciesEntry* entry = store_it == store.end() ? nullptr : store_it->second.find(node.name);
        if (!entry) {
            fail(ErrorCode::DeadEnd, "no " + to_string(rank) + " knowledge base entry for '" + node.name + "'");
        }
        kb.entries.push_back(*entry);
    }
    return kb;
}

// ---- ingestion ---------------------------------------------------------------

json to_json(const RawArticle& article) {
    json sections = json::array();
    for (const auto& s : article.sections) sections.push_back({{"heading", s.heading}, {"body", s.body}});
    return {{"title", article.title},
            {"summary", article.summary},
            {"sections", sections},
            {"source_url", article.source_url},
            {"fetched_at", article.fetched_at}};
}

RawArticle article_from_json(const json& doc) {
    RawArticle article;
    article.title = doc.at("title").get<std::string>();
    article.summary = doc.value("summary", "");
    if (doc.contains("sections")) {
        for (const auto& s : doc.at("sections")) {
            article.sections.push_back({s.at("heading").get<std::string>(), s.value("body", "")});
        }
    }
    article.source_url = doc.value("source_url", "");
    article.fetched_at = doc.value("fetched_at", "");
    return article;
}

FileArticleProvider::FileArticleProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string FileArticleProvider::slug(const std::string& species_name) {
    std::string out = to_lower(trim(species_name));
    std::replace(out.begin(), out.end(), ' ', '_');
    return out;
}

RawArticle FileArticleProvider::get(const std::string& species_name) {
    const auto path = dir_ / (slug(species_name) + ".json");
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        fail(ErrorCode::NotFound, "no article for '" + species_name + "' at " + path.string());
    }
    try {
        RawArticle article = article_from_json(json::parse(read_file(path.string())));
        if (article.source_url.empty()) article.source_url = "file://" + std::filesystem::absolute(path).string();
        if (article.fetched_at.empty()) {
            const auto written = std::chrono::file_clock::to_sys(std::filesystem::last_write_time(path));
            article.fetched_at = format_utc(std::chrono::time_point_cast<Clock::duration>(written));
        }
        return article;
    } catch (const json::exception& e) {
        fail(ErrorCode::IoError, "malformed article " + path.string() + ": " + e.what());
    }
}

RawArticle fetch_article(const std::string& species_name, ArticleProvider& provider) {
    require(!trim(species_name).empty(), "fetch_article: species name must be non-empty");
    RawArticle article = provider.get(species_name);
    article.validate();
    if (article.fetched_at.empty()) article.fetched_at = now_utc();
    return article;
}

std::string extract_visual_sections(const RawArticle& article) {
    std::vector<std::string> parts;
    if (!article.summary.empty()) parts.push_back(article.summary);
    for (const auto& section : article.sections) {
        const bool visual = std::any_of(visual_section_keywords().begin(), visual_section_keywords().end(),
                                        [&](const std::string& kw) { return contains_ci(section.heading, kw); });
        if (visual && !section.body.empty()) parts.push_back(section.body);
    }
    return join(parts, "\n\n");
}

ChatRequest render_summary_request(const std::string& text) {
    require(!text.empty(), "summarize_visual: text must be non-empty");
    ChatRequest request;
    request.system_message = std::string(prompts::kSummarizeSystem);
    request.prompt = replace_all(prompts::kSummarizePrompt, prompts::kWikiArticle, text);
    request.temperature = 0.0;
    return request;
}

std::string summarize_visual(const std::string& text, ModelBackend& chat) {
    const std::string summary = trim(chat.chat(render_summary_request(text)));
    if (summary.empty()) fail(ErrorCode::EmptySummary, "backend returned an empty summary");
    return summary;
}

std::vector<std::string> audit_measurements(const std::string& description) {
    static const std::regex units(R"((\d+(?:[.,]\d+)?)\s*(km/h|cm|inches|in|ft|feet|kg|lbs|lb|m)(?![A-Za-z]))");
    std::vector<std::string> found;
    for (auto it = std::sregex_iterator(description.begin(), description.end(), units); it != std::sregex_iterator();
         ++it) {
        found.push_back(it->str());
    }
    return found;
}

std::vector<SpeciesRow> parse_species_list(const std::string& contents) {
    std::vector<std::string> lines;
    for (auto& line : split(contents, '\n')) {
        std::string t = trim(line);
        if (!t.empty() && t[0] != '#') lines.push_back(std::move(t));
    }
    std::vector<SpeciesRow> rows;
    if (lines.empty()) return rows;

    std::vector<std::string> header = split(lines[0], ',');
    for (auto& h : header) h = to_lower(trim(h));
    const auto label_col = std::find(header.begin(), header.end(), "label");
    if (label_col == header.end()) {
        for (const auto& line : lines) rows.push_back({to_lower(line), {}, line});
        return rows;
    }

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split(lines[i], ',');
        require(cells.size() == header.size(), "species list row " + std::to_string(i + 1) + " has " +
                                                   std::to_string(cells.size()) + " columns, expected " +
                                                   std::to_string(header.size()));
        SpeciesRow row;
        for (std::size_t c = 0; c < header.size(); ++c) {
            const std::string value = trim(cells[c]);
            if (header[c] == "label") {
                row.label = to_lower(value);
            } else if (header[c] == "article") {
                row.article_name = value;
            } else if (!value.empty()) {
                row.taxonomy[rank_from_string(header[c])] = to_lower(value);
            }
        }
        require(!row.label.empty(), "species list row " + std::to_string(i + 1) + " has an empty label");
        if (row.article_name.empty()) row.article_name = row.label;
        rows.push_back(std::move(row));
    }
    return rows;
}

KnowledgeBase build_knowledge_base(const std::vector<SpeciesRow>& rows, ArticleProvider& provider, ModelBackend& chat,
                                   const KbBuildOptions& options) {
    KnowledgeBase kb;
    kb.rank = options.rank;
    kb.entries.resize(rows.size());
    parallel_for(rows.size(), options.jobs, [&](std::size_t i) {
        const SpeciesRow& row = rows[i];
        const RawArticle article = fetch_article(row.article_name, provider);
        const std::string text = extract_visual_sections(article);
        if (trim(text).empty()) fail(ErrorCode::NotFound, "article for '" + row.label + "' has no visual text");
        SpeciesEntry entry;
        entry.label = row.label;
        entry.taxonomy = row.taxonomy;
        entry.description = summarize_visual(text, chat);
        entry.source_url = article.source_url;
        entry.fetched_at = article.fetched_at;
        const auto leftovers = audit_measurements(entry.description);
        if (!leftovers.empty() && options.warn) {
            options.warn(row.label, "summary still contains measurements: " + join(leftovers, ", "));
        }
        kb.entries[i] = std::move(entry);
    });
    kb.validate();
    return kb;
}

}  // namespace zoosight
