#include "zoosight/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

namespace {

void require_records(std::span<const Prediction> records) {
    if (records.empty()) fail(ErrorCode::Empty, "no prediction records");
}

void require_truth(std::span<const Prediction> records) {
    for (const auto& r : records) {
        if (!r.truth) fail(ErrorCode::MissingTruth, "record " + r.image_id + " has no ground truth");
    }
}

}  // namespace

AccuracyResult micro_macro_accuracy(std::span<const Prediction> records) {
    require_records(records);
    require_truth(records);
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
    std::size_t correct = 0;
    for (const auto& r : records) {
        auto& [c, t] = per_class[*r.truth];
        ++t;
        if (r.correct()) {
            ++c;
            ++correct;
        }
    }
    AccuracyResult result;
    result.micro = static_cast<double>(correct) / static_cast<double>(records.size());
    double sum = 0.0;
    for (const auto& [label, ct] : per_class) {
        const double acc = static_cast<double>(ct.first) / static_cast<double>(ct.second);
        result.per_class[label] = acc;
        sum += acc;
    }
    result.macro = sum / static_cast<double>(per_class.size());
    return result;
}

AbstainResult abstain_metrics(std::span<const Prediction> records, double p) {
    require_records(records);
    require(p >= 0.0 && std::isfinite(p), "abstain threshold must be a finite non-negative number");
    AbstainResult result;
    result.threshold = p;
    result.total = records.size();
    bool truth_known = true;
    for (const auto& r : records) {
        if (r.confidence < p) continue;
        ++result.accepted;
        if (!r.truth) truth_known = false;
        if (r.correct()) ++result.accepted_correct;
    }
    result.abstain_rate =
        static_cast<double>(result.total - result.accepted) / static_cast<double>(result.total);
    if (result.accepted > 0 && truth_known) {
        result.confident_accuracy =
            static_cast<double>(result.accepted_correct) / static_cast<double>(result.accepted);
    }
    return result;
}

std::vector<AbstainResult> ar_ca_curve(std::span<const Prediction> records, std::vector<double> thresholds) {
    require_records(records);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    std::vector<AbstainResult> curve;
    curve.reserve(thresholds.size());
    for (double p : thresholds) curve.push_back(abstain_metrics(records, p));
    return curve;
}

std::vector<double> confidence_grid(std::span<const Prediction> records) {
    std::vector<double> grid = {0.0, 1.0};
    for (const auto& r : records) grid.push_back(r.confidence);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

std::size_t bin_index(double confidence, int n_bins) {
    require(n_bins >= 1, "n_bins must be >= 1");
    require(confidence >= 0.0 && confidence <= 1.0, "confidence must lie in [0, 1]");
    const auto n = static_cast<std::size_t>(n_bins);
    if (confidence <= 0.0) return 0;
    auto idx = static_cast<std::size_t>(std::max(0.0, std::ceil(confidence * n_bins) - 1.0));
    idx = std::min(idx, n - 1);
    // Correct for rounding in confidence * n_bins against the exact edge values i / n_bins.
    while (idx > 0 && confidence <= static_cast<double>(idx) / n_bins) --idx;
    while (idx + 1 < n && confidence > static_cast<double>(idx + 1) / n_bins) ++idx;
    return idx;
}

CalibrationResult calibration(std::span<const Prediction> records, int n_bins) {
    require_records(records);
    require_truth(records);
    require(n_bins >= 1, "n_bins must be >= 1");

    struct Accumulator {
        std::size_t count = 0;
        std::size_t correct = 0;
        double confidence_sum = 0.0;
    };
    std::vector<Accumulator> acc(static_cast<std::size_t>(n_bins));
    for (const auto& r : records) {
        auto& a = acc[bin_index(r.confidence, n_bins)];
        ++a.count;
        if (r.correct()) ++a.correct;
        a.confidence_sum += r.confidence;
    }

    CalibrationResult result;
    const auto total = static_cast<double>(records.size());
    std::size_t non_empty = 0;
    double gap_sum = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        ReliabilityBin bin;
        bin.lower = static_cast<double>(i) / n_bins;
        bin.upper = static_cast<double>(i + 1) / n_bins;
        bin.count = acc[i].count;
        if (bin.count > 0) {
            const double accuracy = static_cast<double>(acc[i].correct) / static_cast<double>(bin.count);
            const double mean_conf = acc[i].confidence_sum / static_cast<double>(bin.count);
            bin.accuracy = accuracy;
            bin.mean_confidence = mean_conf;
            const double gap = std::abs(accuracy - mean_conf);
            result.ece += static_cast<double>(bin.count) / total * gap;
            result.mce = std::max(result.mce, gap);
            gap_sum += gap;
            ++non_empty;
        }
        result.bins.push_back(bin);
    }
    result.ace = gap_sum / static_cast<double>(non_empty);
    return result;
}

std::vector<FrameSequence> group_sequences(std::span<const Prediction> records, double window_seconds) {
    require(window_seconds >= 0.0, "sequence window must be non-negative");
    struct Frame {
        double time;
        std::size_t index;
    };
    std::map<std::string, std::vector<Frame>> by_camera;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.timestamp) fail(ErrorCode::MissingTimestamp, "record " + r.image_id + " has no timestamp");
        by_camera[r.camera_id.value_or("")].push_back({parse_timestamp(*r.timestamp), i});
    }

    std::vector<FrameSequence> sequences;
    for (auto& [camera, frames] : by_camera) {
        std::stable_sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) { return a.time < b.time; });
        std::size_t k = 0;
        double previous = 0.0;
        for (const auto& frame : frames) {
            if (sequences.empty() || sequences.back().camera_id != camera || frame.time - previous > window_seconds) {
                sequences.push_back({camera + ":" + std::to_string(k++), camera, {}});
            }
            sequences.back().frames.push_back(frame.index);
            previous = frame.time;
        }
    }
    return sequences;
}

VoteMultiset pooled_votes(const FrameSequence& sequence, std::span<const Prediction> records) {
    require(!sequence.frames.empty(), "sequence has no frames");
    VoteMultiset pooled;
    for (const auto index : sequence.frames) pooled.merge(records[index].votes);
    return pooled;
}

std::string sequence_predict(const FrameSequence& sequence, std::span<const Prediction> records) {
    const VoteMultiset pooled = pooled_votes(sequence, records);
    if (pooled.n_valid == 0) fail(ErrorCode::EmptyVotes, "sequence " + sequence.sequence_id + " carries no votes");
    return majority_vote(pooled.counts).first;
}

std::vector<Prediction> apply_sequence_predictions(std::span<const Prediction> records,
                                                   const std::vector<FrameSequence>& sequences) {
    std::vector<Prediction> out(records.begin(), records.end());
    for (const auto& sequence : sequences) {
        const VoteMultiset pooled = pooled_votes(sequence, records);
        if (pooled.n_valid == 0) fail(ErrorCode::EmptyVotes, "sequence " + sequence.sequence_id + " carries no votes");
        const auto [label, count] = majority_vote(pooled.counts);
        for (const auto index : sequence.frames) {
            auto& p = out[index];
            p.label = label;
            p.votes = pooled;
            p.confidence = static_cast<double>(count) / pooled.n_valid;
            p.sequence_id = sequence.sequence_id;
        }
    }
    return out;
}

EvaluationReport evaluate(std::span<const Prediction> records, int n_bins,
                          std::optional<std::vector<double>> thresholds) {
    EvaluationReport report;
    report.n_records = records.size();
    report.accuracy = micro_macro_accuracy(records);
    report.calibration = calibration(records, n_bins);
    report.ar_ca_curve = ar_ca_curve(records, thresholds ? *thresholds : confidence_grid(records));
    return report;
}

namespace {

json optional_number(const std::optional<double>& value) { return value ? json(*value) : json(nullptr); }

}  // namespace

json to_json(const EvaluationReport& report) {
    json bins = json::array();
    for (const auto& b : report.calibration.bins) {
        bins.push_back({{"lower", b.lower},
                        {"upper", b.upper},
                        {"count", b.count},
                        {"accuracy", optional_number(b.accuracy)},
                        {"mean_confidence", optional_number(b.mean_confidence)}});
    }
    json curve = json::array();
    for (const auto& point : report.ar_ca_curve) {
        curve.push_back({{"threshold", point.threshold},
                         {"abstain_rate", point.abstain_rate},
                         {"confident_accuracy", optional_number(point.confident_accuracy)},
                         {"accepted", point.accepted}});
    }
    json per_class = json::object();
    for (const auto& [label, acc] : report.accuracy.per_class) per_class[label] = acc;
    return {{"n_records", report.n_records},
            {"micro_accuracy", report.accuracy.micro},
            {"macro_accuracy", report.accuracy.macro},
            {"per_class_accuracy", per_class},
            {"ece", report.calibration.ece},
            {"mce", report.calibration.mce},
            {"ace", report.calibration.ace},
            {"bins", bins},
            {"ar_ca_curve", curve}};
}

std::string curve_csv(const std::vector<AbstainResult>& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "threshold,abstain_rate,confident_accuracy,accepted\n";
    for (const auto& p : curve) {
        out << p.threshold << ',' << p.abstain_rate << ',';
        if (p.confident_accuracy) out << *p.confident_accuracy;
        out << ',' << p.accepted << '\n';
    }
    return out.str();
}

std::string bins_csv(const std::vector<ReliabilityBin>& bins) {
    std::ostringstream out;
    out.precision(17);
    out << "lower,upper,count,accuracy,mean_confidence\n";
    for (const auto& b : bins) {
        out << b.lower << ',' << b.upper << ',' << b.count << ',';
        if (b.accuracy) out << *b.accuracy;
        out << ',';
        if (b.mean_confidence) out << *b.mean_confidence;
        out << '\n';
    }
    return out.str();
}

std::map<std::string, std::string> parse_truth_csv(const std::string& contents) {
    std::map<std::string, std::string> truth;
    bool first = true;
    for (const auto& raw : split(contents, '\n')) {
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        require(cells.size() >= 2, "truth CSV line needs image_id,label: " + line);
        const std::string id = trim(cells[0]);
        const std::string label = to_lower(trim(cells[1]));
        if (first && to_lower(id) == "image_id") {
            first = false;
            continue;
        }
        first = false;
        truth[id] = label;
    }
    return truth;
}

void attach_truth(std::vector<Prediction>& records, const std::map<std::string, std::string>& truth) {
    for (auto& r : records) {
        const auto it = truth.find(r.image_id);
        if (it != truth.end()) r.truth = it->second;
    }
}

}  // namespace zoosight
