#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosight/matcher.hpp"

namespace zoosight {

struct AccuracyResult {
    double micro = 0.0;
    double macro = 0.0;
    /// Per true class: accuracy over records of that class.
    std::map<std::string, double> per_class;
};

/// micro = correct / total; macro = unweighted mean over classes present in the ground truth.
AccuracyResult micro_macro_accuracy(std::span<const Prediction> records);

struct AbstainResult {
    double threshold = 0.0;
    double abstain_rate = 0.0;
    /// Absent when nothing is accepted or an accepted record has no truth.
    std::optional<double> confident_accuracy;
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t accepted_correct = 0;
};

/// Accepts records with confidence >= p.
AbstainResult abstain_metrics(std::span<const Prediction> records, double p);

/// abstain_metrics at each distinct threshold, ascending.
std::vector<AbstainResult> ar_ca_curve(std::span<const Prediction> records, std::vector<double> thresholds);

/// Distinct confidence values plus 0 and 1; the default threshold grid.
std::vector<double> confidence_grid(std::span<const Prediction> records);

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    std::optional<double> accuracy;
    std::optional<double> mean_confidence;
};

struct CalibrationResult {
    double ece = 0.0;
    double mce = 0.0;
    double ace = 0.0;
    std::vector<ReliabilityBin> bins;
};

inline constexpr int kDefaultBins = 20;

/// Bin index for a confidence: right-closed equal-width bins on (0,1], with 0 going to the first bin.
std::size_t bin_index(double confidence, int n_bins);

/// ECE weights every bin by its share of records; MCE and ACE only consider non-empty bins.
CalibrationResult calibration(std::span<const Prediction> records, int n_bins = kDefaultBins);

struct FrameSequence {
    std::string sequence_id;
    std::string camera_id;
    /// Indices into the input records, time-ordered.
    std::vector<std::size_t> frames;
};

inline constexpr double kDefaultSequenceWindowSeconds = 60.0;

/// Chains frames of one camera while consecutive gaps stay within `window_seconds`.
/// Sequences come out ordered by camera id, then start time.
std::vector<FrameSequence> group_sequences(std::span<const Prediction> records,
                                           double window_seconds = kDefaultSequenceWindowSeconds);

/// Pools the vote counts of every frame and takes the majority.
VoteMultiset pooled_votes(const FrameSequence& sequence, std::span<const Prediction> records);
std::string sequence_predict(const FrameSequence& sequence, std::span<const Prediction> records);

/// Copies of the records where every frame carries its sequence label, pooled confidence, and sequence id.
std::vector<Prediction> apply_sequence_predictions(std::span<const Prediction> records,
                                                   const std::vector<FrameSequence>& sequences);

struct EvaluationReport {
    std::size_t n_records = 0;
    AccuracyResult accuracy;
    CalibrationResult calibration;
    std::vector<AbstainResult> ar_ca_curve;
};

EvaluationReport evaluate(std::span<const Prediction> records, int n_bins = kDefaultBins,
                          std::optional<std::vector<double>> thresholds = std::nullopt);

nlohmann::json to_json(const EvaluationReport& report);
std::string curve_csv(const std::vector<AbstainResult>& curve);
std::string bins_csv(const std::vector<ReliabilityBin>& bins);

/// image_id,label CSV (header optional). Returns image_id -> label.
std::map<std::string, std::string> parse_truth_csv(const std::string& contents);

/// Sets `truth` from the table; records missing from the table keep their own truth.
void attach_truth(std::vector<Prediction>& records, const std::map<std::string, std::string>& truth);

}  // namespace zoosight
