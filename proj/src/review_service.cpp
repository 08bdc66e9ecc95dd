#include "zoosight/review_service.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <regex>
#include <set>

#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

namespace fs = std::filesystem;

namespace {

constexpr int kStateVersion = 1;
const char* const kEventsFile = "events.jsonl";
const char* const kSnapshotFile = "snapshot.json";

json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> optional_string(const json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    return doc.at(key).get<std::string>();
}

std::string normalize_label(std::string_view label) { return to_lower(trim(label)); }

json item_state_json(const ReviewItem& item) {
    return {{"item_id", item.item_id},
            {"record_index", item.record_index},
            {"status", to_string(item.status)},
            {"expert_label", optional_json(item.expert_label)},
            {"reviewer", optional_json(item.reviewer)},
            {"labeled_at", optional_json(item.labeled_at)},
            {"lease_holder", optional_json(item.lease_holder)},
            {"lease_expires_ms", item.lease_expires_ms ? json(*item.lease_expires_ms) : json(nullptr)}};
}

ReviewItem item_from_state_json(const json& doc, const std::string& run_id) {
    ReviewItem item;
    item.item_id = doc.at("item_id").get<std::string>();
    item.run_id = run_id;
    item.record_index = doc.at("record_index").get<std::size_t>();
    const auto status = doc.at("status").get<std::string>();
    if (status == "pending") {
        item.status = ItemStatus::Pending;
    } else if (status == "labeled") {
        item.status = ItemStatus::Labeled;
    } else {
        fail(ErrorCode::InvalidLog, "unknown item status '" + status + "'");
    }
    item.expert_label = optional_string(doc, "expert_label");
    item.reviewer = optional_string(doc, "reviewer");
    item.labeled_at = optional_string(doc, "labeled_at");
    item.lease_holder = optional_string(doc, "lease_holder");
    if (doc.contains("lease_expires_ms") && !doc.at("lease_expires_ms").is_null()) {
        item.lease_expires_ms = doc.at("lease_expires_ms").get<std::int64_t>();
    }
    return item;
}

ReviewItem* find_mutable(RunState& run, const std::string& item_id) {
    for (auto& item : run.queue) {
        if (item.item_id == item_id) return &item;
    }
    fail(ErrorCode::UnknownItem, "unknown item '" + item_id + "'");
}

RunState build_run(const json& event) {
    RunState run;
    run.run_id = event.at("run_id").get<std::string>();
    run.threshold = event.at("threshold").get<double>();
    run.kb_ref = event.at("kb_ref").get<std::string>();
    run.labels = event.at("labels").get<std::vector<std::string>>();
    run.created_ms = event.at("created_ms").get<std::int64_t>();
    for (const auto& record : event.at("records")) run.records.push_back(prediction_from_json(record));
    for (std::size_t i = 0; i < run.records.size(); ++i) {
        if (run.records[i].confidence >= run.threshold) {
            run.accepted.push_back(i);
        } else {
            ReviewItem item;
            item.item_id = run.run_id + "-" + std::to_string(i);
            item.run_id = run.run_id;
            item.record_index = i;
            run.queue.push_back(std::move(item));
        }
    }
    run.last_seq = event.at("seq").get<std::uint64_t>();
    return run;
}

void apply_to_run(RunState& run, const json& event) {
    const auto type = event.at("type").get<std::string>();
    ReviewItem* item = find_mutable(run, event.at("item_id").get<std::string>());
    if (type == "item_leased") {
        item->lease_holder = event.at("reviewer").get<std::string>();
        item->lease_expires_ms = event.at("expires_ms").get<std::int64_t>();
    } else if (type == "label_submitted") {
        item->status = ItemStatus::Labeled;
        item->expert_label = event.at("label").get<std::string>();
        item->reviewer = event.at("reviewer").get<std::string>();
        item->labeled_at = event.at("labeled_at").get<std::string>();
        item->lease_holder.reset();
        item->lease_expires_ms.reset();
    } else {
        fail(ErrorCode::InvalidLog, "unknown event type '" + type + "'");
    }
    run.last_seq = event.at("seq").get<std::uint64_t>();
}

bool valid_run_id(const std::string& id) {
    static const std::regex pattern("[A-Za-z0-9_.]+(-[A-Za-z0-9_.]+)*");
    return std::regex_match(id, pattern);
}

}  // namespace

std::string_view to_string(ItemStatus status) { return status == ItemStatus::Pending ? "pending" : "labeled"; }

const ReviewItem* RunState::find_item(const std::string& item_id) const {
    for (const auto& item : queue) {
        if (item.item_id == item_id) return &item;
    }
    return nullptr;
}

std::size_t RunState::pending() const {
    return static_cast<std::size_t>(
        std::count_if(queue.begin(), queue.end(), [](const ReviewItem& i) { return i.status == ItemStatus::Pending; }));
}

std::size_t RunState::labeled() const { return queue.size() - pending(); }

// Mutations are serialized on `mutate`; readers take the published state without locking it.
struct ReviewService::RunSlot {
    std::mutex mutate;
    std::shared_ptr<const RunState> state;

    std::shared_ptr<const RunState> load() const { return std::atomic_load(&state); }
    void publish(RunState next) { std::atomic_store(&state, std::shared_ptr<const RunState>(std::make_shared<RunState>(std::move(next)))); }
};

ReviewService::ReviewService(ReviewOptions options) : options_(std::move(options)) {
    require(options_.lease_duration.count() > 0, "lease duration must be positive");
    if (!options_.now_ms) options_.now_ms = [] { return to_epoch_ms(Clock::now()); };
    if (options_.state_dir) {
        fs::create_directories(*options_.state_dir);
        recover();
        log_.open(*options_.state_dir / kEventsFile, std::ios::app | std::ios::binary);
        if (!log_) fail(ErrorCode::IoError, "cannot open event log in " + options_.state_dir->string());
    }
}

ReviewService::~ReviewService() = default;

std::int64_t ReviewService::now_ms() const { return options_.now_ms(); }

std::uint64_t ReviewService::append_event(json event) {
    std::uint64_t seq = 0;
    {
        std::lock_guard lock(log_mutex_);
        seq = ++seq_;
        event["seq"] = seq;
        if (log_.is_open()) {
            log_ << event.dump() << '\n';
            log_.flush();
            if (!log_) fail(ErrorCode::IoError, "event log write failed");
        }
        ++events_since_snapshot_;
    }
    return seq;
}

void ReviewService::maybe_snapshot() {
    if (!options_.state_dir || options_.snapshot_every == 0) return;
    {
        std::lock_guard lock(log_mutex_);
        if (events_since_snapshot_ < options_.snapshot_every) return;
        events_since_snapshot_ = 0;
    }
    snapshot();
}

void ReviewService::snapshot() {
    if (!options_.state_dir) return;
    std::lock_guard guard(snapshot_mutex_);
    std::vector<std::shared_ptr<RunSlot>> slots;
    std::uint64_t next_run = 0;
    {
        std::shared_lock lock(runs_mutex_);
        for (const auto& [id, s] : runs_) slots.push_back(s);
        next_run = next_run_number_;
    }
    // Each run records the last event it reflects, so a snapshot never needs a global cut.
    json runs = json::array();
    for (const auto& s : slots) runs.push_back(to_json(*s->load()));
    const json doc = {{"version", kStateVersion}, {"next_run_number", next_run}, {"runs", runs}};
    const fs::path target = *options_.state_dir / kSnapshotFile;
    const fs::path tmp = *options_.state_dir / (std::string(kSnapshotFile) + ".tmp");
    write_file(tmp.string(), doc.dump());
    fs::rename(tmp, target);
}

void ReviewService::apply_event(const json& event, std::map<std::string, RunState>& runs) const {
    const auto type = event.at("type").get<std::string>();
    const auto run_id = event.at("run_id").get<std::string>();
    const auto seq = event.at("seq").get<std::uint64_t>();
    auto it = runs.find(run_id);
    if (type == "run_created") {
        if (it == runs.end()) runs.emplace(run_id, build_run(event));
        return;
    }
    if (it == runs.end()) fail(ErrorCode::InvalidLog, "event for unknown run '" + run_id + "'");
    if (seq <= it->second.last_seq) return;
    apply_to_run(it->second, event);
}

void ReviewService::recover() {
    std::map<std::string, RunState> runs;
    const fs::path snapshot_path = *options_.state_dir / kSnapshotFile;
    const fs::path events_path = *options_.state_dir / kEventsFile;
    std::uint64_t next_run = 1;
    try {
        if (fs::exists(snapshot_path)) {
            const json doc = json::parse(read_file(snapshot_path.string()));
            if (doc.at("version").get<int>() != kStateVersion) fail(ErrorCode::InvalidLog, "unsupported snapshot version");
            next_run = doc.at("next_run_number").get<std::uint64_t>();
            for (const auto& r : doc.at("runs")) {
                RunState run = run_state_from_json(r);
                seq_ = std::max(seq_, run.last_seq);
                runs.emplace(run.run_id, std::move(run));
            }
        }
        if (fs::exists(events_path)) {
            const auto lines = read_lines(events_path.string());
            for (std::size_t i = 0; i < lines.size(); ++i) {
                if (trim(lines[i]).empty()) continue;
                json event;
                try {
                    event = json::parse(lines[i]);
                } catch (const json::exception&) {
                    // A torn final line means the process died mid-append; that event never took effect.
                    if (i + 1 == lines.size()) break;
                    throw;
                }
                apply_event(event, runs);
                seq_ = std::max(seq_, event.at("seq").get<std::uint64_t>());
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidLog, std::string("corrupt review state: ") + e.what());
    }

    static const std::regex generated("run-([0-9]+)");
    for (auto& [id, run] : runs) {
        std::smatch m;
        if (std::regex_match(id, m, generated)) next_run = std::max<std::uint64_t>(next_run, std::stoull(m[1]) + 1);
        auto s = std::make_shared<RunSlot>();
        for (const auto& item : run.queue) item_runs_[item.item_id] = id;
        s->publish(std::move(run));
        runs_[id] = s;
    }
    next_run_number_ = next_run;
}

std::shared_ptr<ReviewService::RunSlot> ReviewService::slot(const std::string& run_id) const {
    std::shared_lock lock(runs_mutex_);
    const auto it = runs_.find(run_id);
    if (it == runs_.end()) fail(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
    return it->second;
}

std::shared_ptr<ReviewService::RunSlot> ReviewService::slot_for_item(const std::string& item_id) const {
    std::shared_lock lock(runs_mutex_);
    const auto it = item_runs_.find(item_id);
    if (it == item_runs_.end()) fail(ErrorCode::UnknownItem, "unknown item '" + item_id + "'");
    return runs_.at(it->second);
}

std::shared_ptr<const RunState> ReviewService::create_run(std::vector<Prediction> records,
                                                          std::vector<std::string> labels, double p,
                                                          std::string kb_ref, std::optional<std::string> run_id) {
    require(std::isfinite(p) && p >= 0.0 && p <= 1.0, "threshold p must lie in [0, 1]");
    if (records.empty()) fail(ErrorCode::InvalidLog, "prediction log is empty");
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
            fail(ErrorCode::InvalidLog, "record " + r.image_id + " has confidence outside [0, 1]");
        }
        if (!ids.insert(r.image_id).second) fail(ErrorCode::InvalidLog, "duplicate image_id " + r.image_id);
    }
    std::set<std::string> label_set;
    for (const auto& l : labels) {
        const auto n = normalize_label(l);
        if (!n.empty()) label_set.insert(n);
    }
    require(!label_set.empty(), "run label space must be non-empty");

    json records_json = json::array();
    for (const auto& r : records) records_json.push_back(to_json(r));

    std::unique_lock lock(runs_mutex_);
    std::string id;
    if (run_id) {
        id = *run_id;
        require(valid_run_id(id), "run id may only contain letters, digits, '_', '.' and inner '-'");
        if (runs_.count(id)) fail(ErrorCode::DuplicateId, "run '" + id + "' already exists");
    } else {
        do {
            id = "run-" + std::to_string(next_run_number_++);
        } while (runs_.count(id));
    }
    json event = {{"type", "run_created"},
                  {"run_id", id},
                  {"threshold", p},
                  {"kb_ref", kb_ref},
                  {"labels", std::vector<std::string>(label_set.begin(), label_set.end())},
                  {"created_ms", now_ms()},
                  {"records", std::move(records_json)}};
    const auto seq = append_event(event);
    event["seq"] = seq;
    auto s = std::make_shared<RunSlot>();
    RunState run = build_run(event);
    for (const auto& item : run.queue) item_runs_[item.item_id] = id;
    s->publish(std::move(run));
    runs_[id] = s;
    auto published = s->load();
    lock.unlock();
    maybe_snapshot();
    return published;
}

std::shared_ptr<const RunState> ReviewService::create_run(std::vector<Prediction> records, const KnowledgeBase& kb,
                                                          double p, std::string kb_ref,
                                                          std::optional<std::string> run_id) {
    return create_run(std::move(records), kb.labels(), p, std::move(kb_ref), std::move(run_id));
}

std::optional<ReviewItem> ReviewService::next_review_item(const std::string& run_id, const std::string& reviewer) {
    require(!trim(reviewer).empty(), "reviewer must be non-empty");
    auto s = slot(run_id);
    std::optional<ReviewItem> result;
    {
        std::lock_guard lock(s->mutate);
        const auto state = s->load();
        const auto now = now_ms();
        const ReviewItem* chosen = nullptr;
        for (const auto& item : state->queue) {
            if (item.status == ItemStatus::Pending && item.leased_at(now) && *item.lease_holder == reviewer) {
                return item;
            }
        }
        for (const auto& item : state->queue) {
            if (item.status == ItemStatus::Pending && !item.leased_at(now)) {
                chosen = &item;
                break;
            }
        }
        if (!chosen) return std::nullopt;
        json event = {{"type", "item_leased"},
                      {"run_id", run_id},
                      {"item_id", chosen->item_id},
                      {"reviewer", reviewer},
                      {"leased_ms", now},
                      {"expires_ms", now + options_.lease_duration.count()}};
        event["seq"] = append_event(event);
        RunState next = *state;
        apply_to_run(next, event);
        result = *next.find_item(chosen->item_id);
        s->publish(std::move(next));
    }
    maybe_snapshot();
    return result;
}

ReviewItem ReviewService::submit_label(const std::string& item_id, const std::string& label,
                                       const std::string& reviewer) {
    require(!trim(reviewer).empty(), "reviewer must be non-empty");
    auto s = slot_for_item(item_id);
    const std::string normalized = normalize_label(label);
    ReviewItem result;
    {
        std::lock_guard lock(s->mutate);
        const auto state = s->load();
        const ReviewItem* item = state->find_item(item_id);
        if (!item) fail(ErrorCode::UnknownItem, "unknown item '" + item_id + "'");
        if (!std::binary_search(state->labels.begin(), state->labels.end(), normalized)) {
            fail(ErrorCode::OffListLabel, "label '" + label + "' is not in the run's label space");
        }
        if (item->status == ItemStatus::Labeled) {
            if (item->expert_label == normalized) return *item;
            fail(ErrorCode::ConflictingLabel,
                 "item '" + item_id + "' is already labeled '" + item->expert_label.value_or("") + "'");
        }
        const auto now = now_ms();
        if (item->leased_at(now) && *item->lease_holder != reviewer) {
            fail(ErrorCode::ConflictingLabel, "item '" + item_id + "' is leased to another reviewer");
        }
        json event = {{"type", "label_submitted"},
                      {"run_id", state->run_id},
                      {"item_id", item_id},
                      {"label", normalized},
                      {"reviewer", reviewer},
                      {"labeled_at", format_utc(from_epoch_ms(now))}};
        event["seq"] = append_event(event);
        RunState next = *state;
        apply_to_run(next, event);
        result = *next.find_item(item_id);
        s->publish(std::move(next));
    }
    maybe_snapshot();
    return result;
}

std::shared_ptr<const RunState> ReviewService::run(const std::string& run_id) const { return slot(run_id)->load(); }

std::vector<std::string> ReviewService::run_ids() const {
    std::shared_lock lock(runs_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : runs_) ids.push_back(id);
    return ids;
}

ReviewItem ReviewService::item(const std::string& item_id) const {
    const auto state = slot_for_item(item_id)->load();
    const ReviewItem* found = state->find_item(item_id);
    if (!found) fail(ErrorCode::UnknownItem, "unknown item '" + item_id + "'");
    return *found;
}

RunSummary ReviewService::run_summary(const std::string& run_id) const {
    const auto state = run(run_id);
    RunSummary summary;
    summary.run_id = state->run_id;
    summary.threshold = state->threshold;
    summary.total = state->records.size();
    summary.accepted = state->accepted.size();
    summary.queue_depth = state->pending();
    summary.labeled = state->labeled();

    std::size_t accepted_correct = 0;
    bool truth_known = true;
    for (const auto index : state->accepted) {
        const auto& r = state->records[index];
        if (!r.truth) truth_known = false;
        if (r.correct()) ++accepted_correct;
    }
    const auto total = static_cast<double>(summary.total);
    summary.abstain_rate = static_cast<double>(summary.total - summary.accepted) / total;
    if (summary.accepted > 0 && truth_known) {
        summary.confident_accuracy = static_cast<double>(accepted_correct) / static_cast<double>(summary.accepted);
    }
    const auto covered = summary.accepted + summary.labeled;
    summary.combined_coverage = static_cast<double>(covered) / total;
    if (covered > 0 && truth_known) {
        summary.combined_accuracy =
            static_cast<double>(accepted_correct + summary.labeled) / static_cast<double>(covered);
    }
    summary.curve = ar_ca_curve(state->records, confidence_grid(state->records));
    return summary;
}

std::vector<AbstainResult> ReviewService::what_if(const std::string& run_id,
                                                  std::optional<std::vector<double>> thresholds) const {
    const auto state = run(run_id);
    if (thresholds) {
        for (double p : *thresholds) require(std::isfinite(p) && p >= 0.0 && p <= 1.0, "thresholds must lie in [0, 1]");
    }
    return ar_ca_curve(state->records, thresholds ? *thresholds : confidence_grid(state->records));
}

json to_json(const ReviewItem& item, const RunState& run) {
    json doc = item_state_json(item);
    doc.erase("record_index");
    doc["run_id"] = item.run_id;
    json prediction = to_json(run.records.at(item.record_index));
    // Reviewers must not see the reference label.
    prediction.erase("truth");
    doc["image_ref"] = prediction.contains("image") ? prediction["image"] : json(nullptr);
    doc["prediction"] = std::move(prediction);
    return doc;
}

json to_json(const RunState& run) {
    json records = json::array();
    for (const auto& r : run.records) records.push_back(to_json(r));
    json queue = json::array();
    for (const auto& item : run.queue) queue.push_back(item_state_json(item));
    return {{"run_id", run.run_id},
            {"threshold", run.threshold},
            {"kb_ref", run.kb_ref},
            {"labels", run.labels},
            {"records", records},
            {"accepted", run.accepted},
            {"queue", queue},
            {"created_ms", run.created_ms},
            {"last_seq", run.last_seq}};
}

RunState run_state_from_json(const json& doc) {
    try {
        RunState run;
        run.run_id = doc.at("run_id").get<std::string>();
        run.threshold = doc.at("threshold").get<double>();
        run.kb_ref = doc.at("kb_ref").get<std::string>();
        run.labels = doc.at("labels").get<std::vector<std::string>>();
        for (const auto& r : doc.at("records")) run.records.push_back(prediction_from_json(r));
        run.accepted = doc.at("accepted").get<std::vector<std::size_t>>();
        for (const auto& item : doc.at("queue")) run.queue.push_back(item_from_state_json(item, run.run_id));
        run.created_ms = doc.at("created_ms").get<std::int64_t>();
        run.last_seq = doc.at("last_seq").get<std::uint64_t>();
        return run;
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidLog, std::string("malformed run state: ") + e.what());
    }
}

json to_json(const AbstainResult& point) {
    return {{"threshold", point.threshold},
            {"abstain_rate", point.abstain_rate},
            {"confident_accuracy", point.confident_accuracy ? json(*point.confident_accuracy) : json(nullptr)},
            {"accepted", point.accepted},
            {"total", point.total}};
}

json to_json(const RunSummary& summary) {
    json curve = json::array();
    for (const auto& p : summary.curve) curve.push_back(to_json(p));
    json doc = {{"run_id", summary.run_id},
                {"threshold", summary.threshold},
                {"total", summary.total},
                {"accepted", summary.accepted},
                {"queue_depth", summary.queue_depth},
                {"labeled", summary.labeled},
                {"abstain_rate", summary.abstain_rate},
                {"combined_coverage", summary.combined_coverage},
                {"curve", curve}};
    doc["confident_accuracy"] = summary.confident_accuracy ? json(*summary.confident_accuracy) : json(nullptr);
    doc["combined_accuracy"] = summary.combined_accuracy ? json(*summary.combined_accuracy) : json(nullptr);
    return doc;
}

}  // namespace zoosight
