#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "zoosight/gateway.hpp"
#include "zoosight/knowledge_base.hpp"
#include "zoosight/matcher.hpp"
#include "zoosight/util.hpp"

namespace zoosight::test {

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "zoosight-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline Prediction record(const std::string& id, const std::string& label, double confidence,
                         std::optional<std::string> truth = std::nullopt) {
    Prediction p;
    p.image_id = id;
    p.label = label;
    p.confidence = confidence;
    p.truth = std::move(truth);
    return p;
}

/// The 10-record threshold case: confidences {1.0 x5, 0.6 x3, 0.4 x2}; 7 of the 8 confident records are correct.
inline std::vector<Prediction> ten_record_log() {
    std::vector<Prediction> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(record("a" + std::to_string(i), "jaguar", 1.0, "jaguar"));
    rs.push_back(record("b0", "ocelot", 0.6, "ocelot"));
    rs.push_back(record("b1", "ocelot", 0.6, "ocelot"));
    rs.push_back(record("b2", "ocelot", 0.6, "margay"));
    rs.push_back(record("c0", "margay", 0.4, "jaguar"));
    rs.push_back(record("c1", "margay", 0.4, "margay"));
    return rs;
}

struct ParsedMatchPrompt {
    std::vector<std::string> labels;
    std::string caption;
};

/// Recovers the knowledge-base labels and the caption from a rendered matching prompt.
inline ParsedMatchPrompt parse_match_prompt(const std::string& prompt) {
    ParsedMatchPrompt parsed;
    const auto question = prompt.find("\nQuestion: ");
    for (const auto& line : split(prompt.substr(0, question), '\n')) {
        parsed.labels.push_back(line.substr(0, line.find(": ")));
    }
    const std::string open = "description of an animal: ";
    const auto start = prompt.find(open, question) + open.size();
    const auto end = prompt.find(". What is the most likely animal", start);
    parsed.caption = prompt.substr(start, end - start);
    return parsed;
}

/// Three-rank taxonomy (class -> family -> genus) whose genus names are the fine-grained labels.
struct SyntheticTaxonomy {
    KnowledgeBase leaf_kb;
    std::vector<KnowledgeBase> rank_kbs;
    /// Leaf label -> names of every node on its path, itself included.
    std::map<std::string, std::set<std::string>> lineage;
};

inline SyntheticTaxonomy make_taxonomy(Rng& rng, int max_children, int max_leaves) {
    SyntheticTaxonomy t;
    KnowledgeBase classes{Rank::Class, {}};
    KnowledgeBase families{Rank::Family, {}};
    t.leaf_kb.rank = Rank::Genus;
    const auto n_classes = 1 + uniform_index(rng, static_cast<std::size_t>(max_children));
    int leaves = 0;
    for (std::size_t c = 0; c < n_classes && leaves < max_leaves; ++c) {
        const std::string cname = "class" + std::to_string(c);
        classes.entries.push_back({cname, {}, "Description of " + cname + ".", "", ""});
        const auto n_families = 1 + uniform_index(rng, static_cast<std::size_t>(max_children));
        for (std::size_t f = 0; f < n_families && leaves < max_leaves; ++f) {
            const std::string fname = cname + "fam" + std::to_string(f);
            families.entries.push_back({fname, {}, "Description of " + fname + ".", "", ""});
            const auto n_genera = 1 + uniform_index(rng, static_cast<std::size_t>(max_children));
            for (std::size_t g = 0; g < n_genera && leaves < max_leaves; ++g) {
                const std::string gname = fname + "gen" + std::to_string(g);
                t.leaf_kb.entries.push_back({gname,
                                             {{Rank::Class, cname}, {Rank::Family, fname}, {Rank::Genus, gname}},
                                             "Description of " + gname + ".",
                                             "",
                                             ""});
                t.lineage[gname] = {cname, fname, gname};
                ++leaves;
            }
        }
    }
    t.rank_kbs = {classes, families};
    return t;
}

/// Chat backend that reads "truth:<leaf>" captions and answers with the listed label on that leaf's path.
inline std::shared_ptr<CallbackBackend> truth_telling_backend(
    const std::map<std::string, std::set<std::string>>& lineage, std::vector<std::size_t>* kb_sizes = nullptr) {
    auto sizes_mutex = std::make_shared<std::mutex>();
    return std::make_shared<CallbackBackend>(
        [lineage, kb_sizes, sizes_mutex](const ChatRequest& request) -> std::string {
            const auto parsed = parse_match_prompt(request.prompt);
            if (kb_sizes) {
                std::lock_guard lock(*sizes_mutex);
                kb_sizes->push_back(parsed.labels.size());
            }
            const std::string leaf = parsed.caption.substr(parsed.caption.find(':') + 1);
            const auto& path = lineage.at(leaf);
            for (const auto& label : parsed.labels) {
                if (path.count(label)) return label;
            }
            return "none of these";
        },
        [](const VisionRequest& request) { return "truth:" + request.image.image_id; });
}

}  // namespace zoosight::test

namespace zoosight::test {

/// Mock script for flat classification: each image gets one caption per answer, and each caption is matched to it.
inline MockScript classify_script(const std::map<std::string, std::vector<std::string>>& answers_by_image,
                                  const KnowledgeBase& kb) {
    MockScript script;
    for (const auto& [image_id, answers] : answers_by_image) {
        for (std::size_t i = 0; i < answers.size(); ++i) {
            const std::string caption = "caption " + std::to_string(i) + " of " + image_id;
            script[image_id].push_back({caption, std::nullopt});
            script[chat_key(render_matching_prompt(caption, kb))].push_back({answers[i], std::nullopt});
        }
    }
    return script;
}

/// Writes a small placeholder file per image id and returns the matching manifest JSONL.
inline std::string write_images(const TempDir& dir, const std::vector<std::string>& image_ids) {
    std::string manifest;
    for (const auto& id : image_ids) {
        write_file(dir.file(id + ".jpg"), "placeholder " + id);
        manifest += nlohmann::json{{"image_id", id}, {"path", id + ".jpg"}}.dump() + "\n";
    }
    return manifest;
}

/// Serializes a script in the format load_mock_script reads. Scripted failures become rate limits.
inline nlohmann::json mock_script_json(const MockScript& script) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [key, replies] : script) {
        auto& list = doc[key] = nlohmann::json::array();
        for (const auto& r : replies) {
            list.push_back(r.error ? nlohmann::json{{"error", "rate_limited"}} : nlohmann::json(r.text));
        }
    }
    return doc;
}

}  // namespace zoosight::test
