#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosight/evaluator.hpp"
#include "zoosight/knowledge_base.hpp"
#include "zoosight/matcher.hpp"

namespace zoosight {

enum class ItemStatus { Pending, Labeled };

std::string_view to_string(ItemStatus status);

struct ReviewItem {
    std::string item_id;
    std::string run_id;
    /// Index into RunState::records.
    std::size_t record_index = 0;
    ItemStatus status = ItemStatus::Pending;
    std::optional<std::string> expert_label;
    std::optional<std::string> reviewer;
    std::optional<std::string> labeled_at;
    std::optional<std::string> lease_holder;
    std::optional<std::int64_t> lease_expires_ms;

    bool leased_at(std::int64_t now_ms) const { return lease_holder && lease_expires_ms && *lease_expires_ms > now_ms; }
    bool operator==(const ReviewItem&) const = default;
};

struct RunState {
    std::string run_id;
    double threshold = 0.0;
    std::string kb_ref;
    std::vector<std::string> labels;
    std::vector<Prediction> records;
    /// Indices of records with confidence >= threshold, in log order.
    std::vector<std::size_t> accepted;
    /// The remaining records, in log order.
    std::vector<ReviewItem> queue;
    std::int64_t created_ms = 0;
    /// Sequence number of the last event applied to this run.
    std::uint64_t last_seq = 0;

    const ReviewItem* find_item(const std::string& item_id) const;
    std::size_t pending() const;
    std::size_t labeled() const;
    bool operator==(const RunState&) const = default;
};

struct RunSummary {
    std::string run_id;
    double threshold = 0.0;
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t queue_depth = 0;
    std::size_t labeled = 0;
    double abstain_rate = 0.0;
    std::optional<double> confident_accuracy;
    /// Fraction of records that are accepted or expert-labeled.
    double combined_coverage = 0.0;
    /// Accuracy over accepted plus labeled records, counting expert labels as correct.
    std::optional<double> combined_accuracy;
    std::vector<AbstainResult> curve;
};

struct ReviewOptions {
    /// Event log and snapshot live here; no persistence when unset.
    std::optional<std::filesystem::path> state_dir;
    std::chrono::milliseconds lease_duration = std::chrono::minutes(10);
    /// A snapshot is written after this many events (0 disables periodic snapshots).
    std::size_t snapshot_every = 64;
    /// Milliseconds since epoch. Defaults to the system clock.
    std::function<std::int64_t()> now_ms;
};

class ReviewService {
public:
    explicit ReviewService(ReviewOptions options = {});
    ~ReviewService();
    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    std::shared_ptr<const RunState> create_run(std::vector<Prediction> records, std::vector<std::string> labels,
                                               double p, std::string kb_ref = "",
                                               std::optional<std::string> run_id = std::nullopt);
    std::shared_ptr<const RunState> create_run(std::vector<Prediction> records, const KnowledgeBase& kb, double p,
                                               std::string kb_ref = "",
                                               std::optional<std::string> run_id = std::nullopt);

    /// Oldest pending item not leased to someone else. A reviewer that already holds a live lease gets that item back.
    std::optional<ReviewItem> next_review_item(const std::string& run_id, const std::string& reviewer);
    ReviewItem submit_label(const std::string& item_id, const std::string& label, const std::string& reviewer);

    std::shared_ptr<const RunState> run(const std::string& run_id) const;
    std::vector<std::string> run_ids() const;
    ReviewItem item(const std::string& item_id) const;
    RunSummary run_summary(const std::string& run_id) const;
    /// Re-partitions the run at other thresholds without touching the queue.
    std::vector<AbstainResult> what_if(const std::string& run_id,
                                       std::optional<std::vector<double>> thresholds = std::nullopt) const;

    void snapshot();
    std::int64_t now_ms() const;

private:
    struct RunSlot;
    std::shared_ptr<RunSlot> slot(const std::string& run_id) const;
    std::shared_ptr<RunSlot> slot_for_item(const std::string& item_id) const;
    std::uint64_t append_event(nlohmann::json event);
    void maybe_snapshot();
    void recover();
    void apply_event(const nlohmann::json& event, std::map<std::string, RunState>& runs) const;

    ReviewOptions options_;
    mutable std::shared_mutex runs_mutex_;
    std::map<std::string, std::shared_ptr<RunSlot>> runs_;
    std::map<std::string, std::string> item_runs_;
    std::uint64_t next_run_number_ = 1;

    std::mutex log_mutex_;
    std::ofstream log_;
    std::uint64_t seq_ = 0;
    std::size_t events_since_snapshot_ = 0;
    std::mutex snapshot_mutex_;
};

nlohmann::json to_json(const ReviewItem& item, const RunState& run);
nlohmann::json to_json(const RunState& run);
RunState run_state_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunSummary& summary);
nlohmann::json to_json(const AbstainResult& point);

}  // namespace zoosight
