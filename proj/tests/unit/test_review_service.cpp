#include <doctest.h>

#include <atomic>
#include <barrier>
#include <set>
#include <thread>

#include "support/fixtures.hpp"
#include "zoosight/review_service.hpp"

using namespace zoosight;
using nlohmann::json;

namespace {

const std::vector<std::string> kLabels{"jaguar", "ocelot", "margay"};

struct FakeClock {
    std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1'700'000'000'000);
    std::function<std::int64_t()> fn() const {
        return [n = now] { return n->load(); };
    }
    void advance(std::chrono::milliseconds d) const { *now += d.count(); }
};

ReviewOptions options(const FakeClock& clock, std::optional<std::filesystem::path> dir = std::nullopt,
                      std::size_t snapshot_every = 64) {
    ReviewOptions o;
    o.state_dir = std::move(dir);
    o.now_ms = clock.fn();
    o.snapshot_every = snapshot_every;
    return o;
}

void check_partition(const RunState& run) {
    std::vector<int> seen(run.records.size(), 0);
    for (auto i : run.accepted) {
        ++seen[i];
        CHECK(run.records[i].confidence >= run.threshold);
    }
    for (const auto& item : run.queue) {
        ++seen[item.record_index];
        CHECK(run.records[item.record_index].confidence < run.threshold);
        CHECK((item.status == ItemStatus::Labeled) == item.expert_label.has_value());
    }
    for (int s : seen) CHECK(s == 1);
}

}  // namespace

TEST_SUITE("review_service") {
    TEST_CASE("create_run partitions by threshold") {
        FakeClock clock;
        ReviewService service(options(clock));
        const auto run = service.create_run(test::ten_record_log(), kLabels, 0.5);
        CHECK(run->accepted.size() == 8);
        CHECK(run->queue.size() == 2);
        CHECK(run->run_id == "run-1");
        CHECK(run->queue[0].item_id == "run-1-8");
        check_partition(*run);

        CHECK(service.create_run(test::ten_record_log(), kLabels, 0.0)->queue.empty());
        CHECK(service.create_run(test::ten_record_log(), kLabels, 1.0)->queue.size() == 5);
        auto low = test::ten_record_log();
        for (auto& r : low) r.confidence = std::min(r.confidence, 0.9);
        CHECK(service.create_run(low, kLabels, 0.95)->queue.size() == 10);
    }

    TEST_CASE("create_run rejects bad logs and ids") {
        FakeClock clock;
        ReviewService service(options(clock));
        auto code = [&](std::vector<Prediction> rs, std::optional<std::string> id = std::nullopt) {
            try {
                service.create_run(std::move(rs), kLabels, 0.5, "", std::move(id));
            } catch (const Error& e) {
                return e.code();
            }
            return ErrorCode::Empty;
        };
        CHECK(code({}) == ErrorCode::InvalidLog);
        auto dup = test::ten_record_log();
        dup[1].image_id = dup[0].image_id;
        CHECK(code(dup) == ErrorCode::InvalidLog);
        auto out_of_range = test::ten_record_log();
        out_of_range[0].confidence = 1.5;
        CHECK(code(out_of_range) == ErrorCode::InvalidLog);
        CHECK(code(test::ten_record_log(), "mine") == ErrorCode::Empty);
        CHECK(code(test::ten_record_log(), "mine") == ErrorCode::DuplicateId);
        CHECK(code(test::ten_record_log(), "../etc") == ErrorCode::Precondition);
        CHECK_THROWS_AS(service.create_run(test::ten_record_log(), kLabels, 1.5), Error);
        CHECK_THROWS_AS(service.create_run(test::ten_record_log(), std::vector<std::string>{}, 0.5), Error);
    }

    TEST_CASE("leasing hands out the oldest pending item once") {
        FakeClock clock;
        ReviewService service(options(clock));
        const auto run = service.create_run(test::ten_record_log(), kLabels, 0.5);
        const auto first = service.next_review_item(run->run_id, "alice");
        REQUIRE(first);
        CHECK(first->item_id == run->queue[0].item_id);
        CHECK(first->lease_holder == "alice");
        // Alice gets her own lease back; Bob gets the next item.
        CHECK(service.next_review_item(run->run_id, "alice")->item_id == first->item_id);
        const auto second = service.next_review_item(run->run_id, "bob");
        REQUIRE(second);
        CHECK(second->item_id == run->queue[1].item_id);
        CHECK_FALSE(service.next_review_item(run->run_id, "carol"));
        try {
            service.next_review_item("nope", "alice");
            FAIL("expected UnknownRun");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::UnknownRun);
        }
    }

    TEST_CASE("expired leases return items to the pool") {
        FakeClock clock;
        ReviewService service(options(clock));
        const auto run = service.create_run(test::ten_record_log(), kLabels, 0.5);
        const auto a = service.next_review_item(run->run_id, "alice");
        service.next_review_item(run->run_id, "bob");
        CHECK_FALSE(service.next_review_item(run->run_id, "carol"));
        clock.advance(std::chrono::minutes(10));
        const auto c = service.next_review_item(run->run_id, "carol");
        REQUIRE(c);
        CHECK(c->item_id == a->item_id);
        // Alice's lease lapsed, so Carol now holds the item.
        try {
            service.submit_label(a->item_id, "jaguar", "alice");
            FAIL("expected ConflictingLabel");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConflictingLabel);
        }
    }

    TEST_CASE("label submission is idempotent and validated") {
        FakeClock clock;
        ReviewService service(options(clock));
        const auto run = service.create_run(test::ten_record_log(), kLabels, 0.5);
        const auto item = service.next_review_item(run->run_id, "alice");
        const auto labeled = service.submit_label(item->item_id, " Jaguar ", "alice");
        CHECK(labeled.status == ItemStatus::Labeled);
        CHECK(labeled.expert_label == "jaguar");
        CHECK(labeled.reviewer == "alice");
        CHECK(labeled.labeled_at);
        CHECK_FALSE(labeled.lease_holder);

        const auto before = *service.run(run->run_id);
        CHECK(service.submit_label(item->item_id, "jaguar", "alice") == labeled);
        CHECK(*service.run(run->run_id) == before);

        auto code = [&](const std::string& id, const std::string& label) {
            try {
                service.submit_label(id, label, "alice");
            } catch (const Error& e) {
                return e.code();
            }
            return ErrorCode::Empty;
        };
        CHECK(code(item->item_id, "ocelot") == ErrorCode::ConflictingLabel);
        CHECK(code(item->item_id, "tiger") == ErrorCode::OffListLabel);
        CHECK(code("run-1-999", "jaguar") == ErrorCode::UnknownItem);

        // Labeling without a lease is allowed while nobody else holds the item.
        const auto other = run->queue[1].item_id;
        CHECK(service.submit_label(other, "margay", "bob").status == ItemStatus::Labeled);
        check_partition(*service.run(run->run_id));
    }

    TEST_CASE("summary matches abstain_metrics and tracks labeling") {
        FakeClock clock;
        ReviewService service(options(clock));
        const auto log = test::ten_record_log();
        const auto run = service.create_run(log, kLabels, 0.5);
        auto summary = service.run_summary(run->run_id);
        const auto expected = abstain_metrics(log, 0.5);
        CHECK(summary.abstain_rate == expected.abstain_rate);
        CHECK(summary.confident_accuracy == expected.confident_accuracy);
        CHECK(summary.abstain_rate == doctest::Approx(0.2));
        CHECK(*summary.confident_accuracy == doctest::Approx(0.875));
        CHECK(summary.queue_depth == 2);
        CHECK(summary.combined_coverage == doctest::Approx(0.8));

        for (const auto& item : run->queue) service.submit_label(item.item_id, "margay", "alice");
        summary = service.run_summary(run->run_id);
        CHECK(summary.queue_depth == 0);
        CHECK(summary.labeled == 2);
        CHECK(summary.combined_coverage == 1.0);
        CHECK(*summary.combined_accuracy == doctest::Approx(0.9));

        auto no_truth = log;
        for (auto& r : no_truth) r.truth.reset();
        const auto blind = service.run_summary(service.create_run(no_truth, kLabels, 0.5)->run_id);
        CHECK_FALSE(blind.confident_accuracy);
        CHECK(blind.abstain_rate == doctest::Approx(0.2));

        const auto curve = service.what_if(run->run_id, std::vector<double>{0.0, 0.7});
        REQUIRE(curve.size() == 2);
        CHECK(curve[1].abstain_rate == doctest::Approx(0.5));
        CHECK(service.run(run->run_id)->queue.size() == 2);
        CHECK_THROWS_AS(service.what_if(run->run_id, std::vector<double>{2.0}), Error);
    }

    TEST_CASE("summary agrees with abstain_metrics on random logs") {
        FakeClock clock;
        ReviewService service(options(clock));
        Rng rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Prediction> log;
            const auto n = 1 + uniform_index(rng, 30);
            for (std::size_t i = 0; i < n; ++i) {
                const double conf = static_cast<double>(uniform_index(rng, 6)) / 5.0;
                log.push_back(test::record("i" + std::to_string(i), kLabels[uniform_index(rng, 3)], conf,
                                           kLabels[uniform_index(rng, 3)]));
            }
            const double p = static_cast<double>(uniform_index(rng, 6)) / 5.0;
            const auto run = service.create_run(log, kLabels, p);
            check_partition(*run);
            const auto summary = service.run_summary(run->run_id);
            const auto expected = abstain_metrics(log, p);
            CHECK(summary.abstain_rate == expected.abstain_rate);
            CHECK(summary.confident_accuracy == expected.confident_accuracy);
        }
    }

    TEST_CASE("concurrent reviewers never share an item") {
        FakeClock clock;
        ReviewService service(options(clock));
        std::vector<Prediction> log;
        for (int i = 0; i < 200; ++i) log.push_back(test::record("img" + std::to_string(i), "jaguar", 0.2));
        const auto run = service.create_run(log, kLabels, 0.5);

        constexpr int kThreads = 8;
        std::vector<std::vector<std::string>> taken(kThreads);
        std::barrier start(kThreads);
        std::vector<std::thread> threads;
        for (int t = 0; t < kThreads; ++t) {
            threads.emplace_back([&, t] {
                const std::string reviewer = "r" + std::to_string(t);
                start.arrive_and_wait();
                while (auto item = service.next_review_item(run->run_id, reviewer)) {
                    taken[t].push_back(item->item_id);
                    service.submit_label(item->item_id, "ocelot", reviewer);
                }
            });
        }
        for (auto& th : threads) th.join();
        std::set<std::string> all;
        std::size_t count = 0;
        for (const auto& list : taken) {
            count += list.size();
            all.insert(list.begin(), list.end());
        }
        CHECK(count == 200);
        CHECK(all.size() == 200);
        const auto final_state = service.run(run->run_id);
        CHECK(final_state->pending() == 0);
        check_partition(*final_state);
    }

    TEST_CASE("restart reproduces the state from the event log and snapshots") {
        FakeClock clock;
        test::TempDir dir;
        for (std::size_t snapshot_every : {std::size_t{0}, std::size_t{3}}) {
            const auto state_dir = dir.path() / ("s" + std::to_string(snapshot_every));
            std::vector<RunState> before;
            {
                ReviewService service(options(clock, state_dir, snapshot_every));
                const auto a = service.create_run(test::ten_record_log(), kLabels, 0.7, "kb.json");
                const auto b = service.create_run(test::ten_record_log(), kLabels, 0.5, "", "named");
                const auto item = service.next_review_item(a->run_id, "alice");
                service.submit_label(item->item_id, "ocelot", "alice");
                service.next_review_item(a->run_id, "bob");
                service.next_review_item(b->run_id, "carol");
                before = {*service.run(a->run_id), *service.run(b->run_id)};
            }
            ReviewService restarted(options(clock, state_dir, snapshot_every));
            CHECK(restarted.run_ids() == std::vector<std::string>{"named", "run-1"});
            CHECK(*restarted.run("run-1") == before[0]);
            CHECK(*restarted.run("named") == before[1]);
            CHECK(restarted.create_run(test::ten_record_log(), kLabels, 0.5)->run_id == "run-2");
            CHECK(restarted.item("run-1-5").status == ItemStatus::Labeled);
        }
    }

    TEST_CASE("a torn final event line is ignored on recovery") {
        FakeClock clock;
        test::TempDir dir;
        RunState before;
        {
            ReviewService service(options(clock, dir.path(), 0));
            const auto run = service.create_run(test::ten_record_log(), kLabels, 0.5);
            service.next_review_item(run->run_id, "alice");
            before = *service.run(run->run_id);
        }
        {
            std::ofstream out(dir.path() / "events.jsonl", std::ios::app);
            out << R"({"type":"label_submitted","run_id":"run-1","item_)";
        }
        ReviewService restarted(options(clock, dir.path(), 0));
        CHECK(*restarted.run("run-1") == before);

        write_file((dir.path() / "events.jsonl").string(), "garbage\n{}\n");
        try {
            ReviewService broken(options(clock, dir.path(), 0));
            FAIL("expected InvalidLog");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidLog);
        }
    }

    TEST_CASE("item JSON hides the reference label") {
        FakeClock clock;
        ReviewService service(options(clock));
        auto log = test::ten_record_log();
        log[8].image = "/data/c0.jpg";
        const auto run = service.create_run(log, kLabels, 0.5);
        const auto doc = to_json(run->queue[0], *run);
        CHECK(doc["image_ref"] == "/data/c0.jpg");
        CHECK_FALSE(doc["prediction"].contains("truth"));
        CHECK(doc["prediction"]["label"] == "margay");
        CHECK(doc["status"] == "pending");
        CHECK(run_state_from_json(to_json(*run)) == *run);
    }
}
