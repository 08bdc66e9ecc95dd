#include "zoosight/caption_scorer.hpp"

#include <cctype>
#include <cmath>

#include "zoosight/prompts.hpp"
#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

namespace {

ChatRequest render_score(std::string_view tmpl, const std::string& reference, const std::string& generated) {
    require(!trim(reference).empty(), "scoring: reference description must be non-empty");
    require(!trim(generated).empty(), "scoring: generated caption must be non-empty");
    ChatRequest request;
    request.prompt = substitute(tmpl, {{prompts::kExpertDescr, reference}, {prompts::kLmmCaption, generated}});
    request.temperature = 0.0;
    request.max_tokens = 16;
    return request;
}

}  // namespace

ChatRequest render_relevance_prompt(const std::string& reference, const std::string& generated) {
    return render_score(prompts::kRelevancePrompt, reference, generated);
}

ChatRequest render_hallucination_prompt(const std::string& reference, const std::string& generated) {
    return render_score(prompts::kHallucinationPrompt, reference, generated);
}

int parse_score(const std::string& raw) {
    std::size_t i = 0;
    while (i < raw.size() && !std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
    if (i == raw.size()) fail(ErrorCode::UnparseableScore, "no integer in score response '" + trim(raw) + "'");
    std::size_t j = i;
    while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j]))) ++j;
    const std::string digits = raw.substr(i, j - i);
    const bool negative = i > 0 && raw[i - 1] == '-';
    if (negative || digits.size() > 2) fail(ErrorCode::OutOfRange, "score " + digits + " outside [1, 10]");
    const int value = std::stoi(digits);
    if (value < 1 || value > 10) fail(ErrorCode::OutOfRange, "score " + digits + " outside [1, 10]");
    return value;
}

std::vector<ScoringSample> parse_scoring_samples(const std::string& jsonl) {
    std::vector<ScoringSample> samples;
    for (const auto& line : split(jsonl, '\n')) {
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            samples.push_back({doc.at("sample_id").get<std::string>(), doc.at("reference").get<std::string>(),
                               doc.at("generated").get<std::string>()});
        } catch (const json::exception& e) {
            fail(ErrorCode::Precondition, std::string("malformed scoring sample: ") + e.what());
        }
    }
    return samples;
}

ScoreRecord score_sample(const ScoringSample& sample, ModelBackend& chat, const ScoreOptions& options) {
    ScoreRecord record;
    record.sample_id = sample.sample_id;
    auto ask = [&](const ChatRequest& request) -> std::optional<int> {
        const int attempts = options.retry_unparseable ? 2 : 1;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            const std::string response = chat.chat(request);
            record.raw_responses.push_back(response);
            try {
                return parse_score(response);
            } catch (const Error&) {
            }
        }
        return std::nullopt;
    };
    record.relevance = ask(render_relevance_prompt(sample.reference, sample.generated));
    record.hallucination = ask(render_hallucination_prompt(sample.reference, sample.generated));
    return record;
}

void ScoreStats::add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
}

void ScoreStats::merge(const ScoreStats& other) {
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    const double n = static_cast<double>(count + other.count);
    const double delta = other.mean - mean;
    mean += delta * static_cast<double>(other.count) / n;
    m2 += other.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(other.count) / n;
    count += other.count;
}

double ScoreStats::stddev() const { return count == 0 ? 0.0 : std::sqrt(m2 / static_cast<double>(count)); }

ScoreSummary aggregate_scores(const std::vector<ScoreRecord>& records) {
    ScoreSummary summary;
    summary.total = records.size();
    std::size_t scored = 0;
    for (const auto& r : records) {
        if (r.relevance) summary.relevance.add(*r.relevance);
        if (r.hallucination) summary.hallucination.add(*r.hallucination);
        if (r.relevance || r.hallucination) ++scored;
    }
    if (scored == 0) fail(ErrorCode::Empty, "no scored records to aggregate");
    summary.coverage = static_cast<double>(scored) / static_cast<double>(summary.total);
    return summary;
}

json to_json(const ScoreRecord& record) {
    return {{"sample_id", record.sample_id},
            {"relevance", record.relevance ? json(*record.relevance) : json(nullptr)},
            {"hallucination", record.hallucination ? json(*record.hallucination) : json(nullptr)},
            {"raw_responses", record.raw_responses}};
}

json scores_report(const std::vector<ScoreRecord>& records) {
    json per_record = json::array();
    for (const auto& r : records) per_record.push_back(to_json(r));
    json doc = {{"records", per_record}};
    try {
        const ScoreSummary s = aggregate_scores(records);
        auto stats = [](const ScoreStats& st) {
            if (st.count == 0) return json{{"count", 0}, {"mean", nullptr}, {"std", nullptr}};
            return json{{"count", st.count}, {"mean", st.mean}, {"std", st.stddev()}};
        };
        doc["aggregate"] = {{"relevance", stats(s.relevance)},
                            {"hallucination", stats(s.hallucination)},
                            {"total", s.total},
                            {"coverage", s.coverage}};
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Empty) throw;
        doc["aggregate"] = nullptr;
    }
    return doc;
}

}  // namespace zoosight
