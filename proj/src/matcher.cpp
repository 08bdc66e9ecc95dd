#include "zoosight/matcher.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "zoosight/prompts.hpp"
#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

void VoteMultiset::add(const std::string& label, int count) {
    counts[label] += count;
    n_valid += count;
}

void VoteMultiset::merge(const VoteMultiset& other) {
    for (const auto& [label, count] : other.counts) counts[label] += count;
    n_valid += other.n_valid;
    n_attempted += other.n_attempted;
}

// ---- prediction log ------------------------------------------------------------------

namespace {

json votes_to_json(const VoteMultiset& votes) {
    json counts = json::object();
    for (const auto& [label, count] : votes.counts) counts[label] = count;
    return counts;
}

VoteMultiset votes_from_json(const json& counts, int n_attempted, int n_valid) {
    VoteMultiset votes;
    for (const auto& [label, count] : counts.items()) votes.counts[label] = count.get<int>();
    votes.n_attempted = n_attempted;
    votes.n_valid = n_valid;
    return votes;
}

template <typename T>
void put_optional(json& doc, const char* key, const std::optional<T>& value) {
    if (value) doc[key] = *value;
}

std::optional<std::string> optional_string(const json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    const auto& value = doc.at(key);
    if (value.is_string()) return value.get<std::string>();
    return value.dump();
}

}  // namespace

json to_json(const Prediction& p) {
    json doc = {{"image_id", p.image_id},
                {"captions", p.captions},
                {"votes", votes_to_json(p.votes)},
                {"n_attempted", p.votes.n_attempted},
                {"n_valid", p.votes.n_valid},
                {"label", p.label},
                {"confidence", p.confidence}};
    put_optional(doc, "sequence_id", p.sequence_id);
    put_optional(doc, "camera_id", p.camera_id);
    put_optional(doc, "timestamp", p.timestamp);
    put_optional(doc, "image", p.image);
    put_optional(doc, "truth", p.truth);
    if (!p.path.empty()) {
        json path = json::array();
        for (const auto& step : p.path) {
            path.push_back({{"rank", to_string(step.rank)},
                            {"label", step.label},
                            {"confidence", step.confidence},
                            {"votes", votes_to_json(step.votes)},
                            {"n_attempted", step.votes.n_attempted},
                            {"n_valid", step.votes.n_valid}});
        }
        doc["path"] = path;
    }
    return doc;
}

Prediction prediction_from_json(const json& doc) {
    try {
        Prediction p;
        p.image_id = doc.at("image_id").get<std::string>();
        p.label = doc.at("label").get<std::string>();
        p.confidence = doc.at("confidence").get<double>();
        const json counts = doc.value("votes", json::object());
        int total = 0;
        for (const auto& [label, count] : counts.items()) total += count.get<int>();
        const int n_valid = doc.value("n_valid", total);
        p.votes = votes_from_json(counts, doc.value("n_attempted", n_valid), n_valid);
        if (doc.contains("captions")) p.captions = doc.at("captions").get<std::vector<std::string>>();
        p.truth = optional_string(doc, "truth");
        p.image = optional_string(doc, "image");
        p.camera_id = optional_string(doc, "camera_id");
        p.timestamp = optional_string(doc, "timestamp");
        p.sequence_id = optional_string(doc, "sequence_id");
        if (doc.contains("path")) {
            for (const auto& step : doc.at("path")) {
                const int valid = step.value("n_valid", 0);
                p.path.push_back({rank_from_string(step.at("rank").get<std::string>()),
                                  step.at("label").get<std::string>(), step.value("confidence", 0.0),
                                  votes_from_json(step.value("votes", json::object()), step.value("n_attempted", valid),
                                                  valid)});
            }
        }
        if (p.confidence < 0.0 || p.confidence > 1.0) {
            fail(ErrorCode::InvalidLog, "confidence out of [0,1] for " + p.image_id);
        }
        return p;
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidLog, std::string("malformed prediction record: ") + e.what());
    }
}

std::string to_jsonl(const std::vector<Prediction>& predictions) {
    std::string out;
    for (const auto& p : predictions) {
        out += to_json(p).dump();
        out += '\n';
    }
    return out;
}

std::vector<Prediction> parse_prediction_log(const std::string& contents) {
    std::vector<Prediction> out;
    std::size_t line_no = 0;
    for (const auto& line : split(contents, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(prediction_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            fail(ErrorCode::InvalidLog, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Prediction> load_prediction_log(const std::string& path) {
    return parse_prediction_log(read_file(path));
}

void write_prediction_log(const std::vector<Prediction>& predictions, const std::string& path) {
    write_file(path, to_jsonl(predictions));
}

// ---- matching ----------------------------------------------------------------------

ChatRequest render_matching_prompt(const std::string& caption, const KnowledgeBase& kb) {
    if (kb.empty()) fail(ErrorCode::EmptyKnowledgeBase, "matching needs a non-empty knowledge base");
    std::vector<std::string> lines;
    std::vector<std::string> labels;
    for (const auto& entry : kb.entries) {
        lines.push_back(entry.label + ": " + entry.description);
        labels.push_back(entry.label);
    }
    const std::string knowledge = join(lines, "\n");
    const std::string species = join(labels, ", ");

    ChatRequest request;
    request.system_message = std::string(prompts::kMatchSystem);
    request.prompt = substitute(prompts::kMatchPrompt, {{prompts::kKnowledgeBase, knowledge},
                                                        {prompts::kLmmCaption, caption},
                                                        {prompts::kSpeciesList, species}});
    request.temperature = 0.0;
    return request;
}

namespace {

std::vector<std::string> answer_tokens(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : to_lower(text)) {
        const bool keep = std::isalnum(c) || c == '-' || c == '\'' || c >= 0x80;
        cleaned.push_back(keep ? static_cast<char>(c) : ' ');
    }
    std::vector<std::string> tokens;
    std::istringstream in(cleaned);
    std::string token;
    while (in >> token) {
        while (!token.empty() && (token.front() == '-' || token.front() == '\'')) token.erase(0, 1);
        while (!token.empty() && (token.back() == '-' || token.back() == '\'')) token.pop_back();
        if (token.empty() || token == "the" || token == "a" || token == "an") continue;
        tokens.push_back(token);
    }
    return tokens;
}

bool contains_run(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace

std::string normalize_answer(const std::string& raw, const std::vector<std::string>& valid_labels) {
    require(!valid_labels.empty(), "normalize_answer: label list must be non-empty");
    const auto answer = answer_tokens(raw);
    if (answer.empty()) fail(ErrorCode::OffListAnswer, "empty answer");

    std::vector<std::vector<std::string>> label_tokens;
    label_tokens.reserve(valid_labels.size());
    for (const auto& label : valid_labels) label_tokens.push_back(answer_tokens(label));

    for (std::size_t i = 0; i < valid_labels.size(); ++i) {
        if (label_tokens[i] == answer) return valid_labels[i];
    }

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < valid_labels.size(); ++i) {
        if (contains_run(answer, label_tokens[i]) || contains_run(label_tokens[i], answer)) candidates.push_back(i);
    }
    // "white-tailed deer" beats "deer" when the answer mentions both.
    std::erase_if(candidates, [&](std::size_t i) {
        return std::any_of(candidates.begin(), candidates.end(), [&](std::size_t j) {
            return j != i && label_tokens[j] != label_tokens[i] && contains_run(label_tokens[j], label_tokens[i]) &&
                   contains_run(answer, label_tokens[j]);
        });
    });
    if (candidates.empty()) fail(ErrorCode::OffListAnswer, "answer '" + trim(raw) + "' is not in the label list");
    if (candidates.size() > 1) {
        std::vector<std::string> names;
        for (auto i : candidates) names.push_back(valid_labels[i]);
        fail(ErrorCode::AmbiguousAnswer, "answer '" + trim(raw) + "' matches " + join(names, ", "));
    }
    return valid_labels[candidates.front()];
}

std::string match_description(const std::string& caption, const KnowledgeBase& kb, ModelBackend& chat,
                              const MatchOptions& options) {
    require(options.retries >= 0, "match_description: retries must be >= 0");
    const ChatRequest request = render_matching_prompt(caption, kb);
    const auto labels = kb.labels();
    for (int attempt = 0;; ++attempt) {
        try {
            return normalize_answer(chat.chat(request), labels);
        } catch (const Error& e) {
            const bool off_list = e.code() == ErrorCode::OffListAnswer || e.code() == ErrorCode::AmbiguousAnswer;
            if (!off_list || attempt >= options.retries) throw;
        }
    }
}

std::pair<std::string, int> majority_vote(const std::map<std::string, int>& counts) {
    const std::pair<const std::string, int>* best = nullptr;
    for (const auto& item : counts) {
        if (item.second <= 0) continue;
        if (!best || item.second > best->second) best = &item;  // map order gives the lexicographic tie-break
    }
    if (!best) fail(ErrorCode::EmptyVoteSet, "no votes to aggregate");
    return {best->first, best->second};
}

std::pair<std::string, int> majority_vote(const std::vector<std::string>& labels) {
    if (labels.empty()) fail(ErrorCode::EmptyVoteSet, "no votes to aggregate");
    std::map<std::string, int> counts;
    for (const auto& label : labels) ++counts[label];
    return majority_vote(counts);
}

Prediction self_consistent_predict(const CaptionSet& captions, const KnowledgeBase& kb, ModelBackend& chat,
                                   const MatchOptions& options) {
    require(!captions.captions.empty(), "self_consistent_predict: caption set must be non-empty");
    if (kb.empty()) fail(ErrorCode::EmptyKnowledgeBase, "matching needs a non-empty knowledge base");

    const std::size_t n = captions.captions.size();
    std::vector<std::optional<std::string>> matched(n);
    parallel_for(n, chat.max_in_flight(), [&](std::size_t i) {
        try {
            matched[i] = match_description(captions.captions[i], kb, chat, options);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Precondition || e.code() == ErrorCode::EmptyKnowledgeBase) throw;
        }
    });

    Prediction prediction;
    prediction.image_id = captions.image_id;
    prediction.captions = captions.captions;
    prediction.votes.n_attempted = static_cast<int>(n);
    for (const auto& label : matched) {
        if (label) prediction.votes.add(*label);
    }
    if (prediction.votes.n_valid == 0) {
        fail(ErrorCode::AllMatchesFailed, "no caption of " + captions.image_id + " matched a label");
    }
    const auto [label, count] = majority_vote(prediction.votes.counts);
    prediction.label = label;
    prediction.confidence = static_cast<double>(count) / prediction.votes.n_valid;
    return prediction;
}

// ---- hierarchy ---------------------------------------------------------------------

namespace {

const SpeciesEntry& store_entry(const KbStore& store, const TaxonomyTree::Node& node) {
    const auto it = store.find(node.rank);
    const SpeciesEntry* entry = it == store.end() ? nullptr : it->second.find(node.name);
    if (!entry) fail(ErrorCode::DeadEnd, "no " + to_string(node.rank) + " knowledge base entry for '" + node.name + "'");
    return *entry;
}

}  // namespace

KnowledgeBase kb_for_children(const TaxonomyTree& tree, const KbStore& store,
                              std::optional<TaxonomyTree::NodeId> parent) {
    KnowledgeBase kb;
    const auto& children = tree.children(parent);
    if (!children.empty()) kb.rank = tree.node(children.front()).rank;
    for (const auto id : children) kb.entries.push_back(store_entry(store, tree.node(id)));
    return kb;
}

KnowledgeBase kb_for_labels(const TaxonomyTree& tree, const KbStore& store,
                            std::optional<TaxonomyTree::NodeId> parent) {
    KnowledgeBase kb;
    kb.rank = Rank::Class;
    for (const auto id : tree.labels_under(parent)) {
        const auto& node = tree.node(id);
        kb.rank = std::max(kb.rank, node.rank);
        kb.entries.push_back(store_entry(store, node));
    }
    return kb;
}

Prediction hierarchical_predict(const CaptionSet& captions, const TaxonomyTree& tree, const KbStore& store,
                                ModelBackend& chat, const HierarchyOptions& options) {
    require(options.fanout_limit >= 2, "hierarchical_predict: fanout_limit must be >= 2");
    require(!tree.empty(), "hierarchical_predict: empty taxonomy");

    std::optional<TaxonomyTree::NodeId> current;
    std::vector<PathStep> path;
    while (true) {
        const auto reachable = tree.labels_under(current);
        const bool direct = reachable.size() <= static_cast<std::size_t>(options.fanout_limit);
        const KnowledgeBase kb = direct ? kb_for_labels(tree, store, current) : kb_for_children(tree, store, current);
        if (kb.empty()) {
            const std::string where = current ? tree.node(*current).name : std::string("<root>");
            fail(ErrorCode::DeadEnd, "nothing to match below " + where);
        }

        Prediction stage = self_consistent_predict(captions, kb, chat, options.match);
        const auto& candidates = direct ? reachable : tree.children(current);
        const auto chosen = std::find_if(candidates.begin(), candidates.end(), [&](TaxonomyTree::NodeId id) {
            return tree.node(id).name == stage.label;
        });
        const TaxonomyTree::Node& node = tree.node(*chosen);
        path.push_back({node.rank, stage.label, stage.confidence, stage.votes});

        if (direct || (node.is_label && node.children.empty())) {
            stage.path = std::move(path);
            return stage;
        }
        current = *chosen;
    }
}

}  // namespace zoosight
