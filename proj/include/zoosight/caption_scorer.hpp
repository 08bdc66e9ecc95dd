#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosight/gateway.hpp"

namespace zoosight {

ChatRequest render_relevance_prompt(const std::string& reference, const std::string& generated);
ChatRequest render_hallucination_prompt(const std::string& reference, const std::string& generated);

/// First integer token of the response; must lie in [1, 10].
int parse_score(const std::string& raw);

struct ScoringSample {
    std::string sample_id;
    std::string reference;
    std::string generated;
};

std::vector<ScoringSample> parse_scoring_samples(const std::string& jsonl);

struct ScoreRecord {
    std::string sample_id;
    std::optional<int> relevance;
    std::optional<int> hallucination;
    std::vector<std::string> raw_responses;
};

struct ScoreOptions {
    /// Re-ask once per score when the response cannot be parsed.
    bool retry_unparseable = false;
};

ScoreRecord score_sample(const ScoringSample& sample, ModelBackend& chat, const ScoreOptions& options = {});

/// Running mean and population variance; mergeable.
struct ScoreStats {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x);
    void merge(const ScoreStats& other);
    double stddev() const;
};

struct ScoreSummary {
    ScoreStats relevance;
    ScoreStats hallucination;
    std::size_t total = 0;
    /// Fraction of records with at least one score.
    double coverage = 0.0;
};

ScoreSummary aggregate_scores(const std::vector<ScoreRecord>& records);

nlohmann::json to_json(const ScoreRecord& record);
nlohmann::json scores_report(const std::vector<ScoreRecord>& records);

}  // namespace zoosight
