#include <doctest.h>

#include "support/fixtures.hpp"
#include "zoosight/pipeline.hpp"

using namespace zoosight;
using nlohmann::json;

namespace {

KnowledgeBase cats() {
    return {Rank::Species,
            {{"jaguar", {}, "A large spotted cat.", "", ""}, {"ocelot", {}, "A medium-sized spotted cat.", "", ""}}};
}

ClassifyOptions options(int n) {
    ClassifyOptions o;
    o.n_samples = n;
    o.seed = 5;
    return o;
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("manifest parsing") {
        const auto entries = parse_manifest(
            R"({"image_id":"a","path":"img/a.jpg","camera_id":"c1","timestamp":"2024-01-01T00:00:00Z","truth":" Jaguar "})"
            "\n"
            R"({"image_id":"b","path":"/abs/b.jpg","timestamp":12})"
            "\n",
            "/data");
        REQUIRE(entries.size() == 2);
        CHECK(entries[0].path == "/data/img/a.jpg");
        CHECK(entries[0].truth == "jaguar");
        CHECK(entries[0].camera_id == "c1");
        CHECK(entries[1].path == "/abs/b.jpg");
        CHECK(entries[1].timestamp == "12");
        CHECK_FALSE(entries[1].camera_id);
        CHECK_THROWS_AS(parse_manifest(R"({"path":"x"})"), Error);
        CHECK_THROWS_AS(parse_manifest(R"({"image_id":"","path":"x"})"), Error);
    }

    TEST_CASE("flat classification of a manifest") {
        test::TempDir dir;
        const auto manifest = test::write_images(dir, {"img1", "img2"});
        write_file(dir.file("manifest.jsonl"), manifest);
        const auto kb = cats();
        MockBackend mock(test::classify_script(
            {{"img1", {"jaguar", "jaguar", "ocelot"}}, {"img2", {"ocelot", "Ocelot.", "ocelot"}}}, kb));
        const auto result =
            classify_manifest(load_manifest(dir.file("manifest.jsonl")), ClassifyContext::flat(kb), mock, mock,
                              options(3));
        CHECK(result.failures.empty());
        REQUIRE(result.predictions.size() == 2);
        CHECK(result.predictions[0].label == "jaguar");
        CHECK(result.predictions[0].confidence == doctest::Approx(2.0 / 3.0));
        CHECK(result.predictions[0].captions.size() == 3);
        CHECK(result.predictions[0].image == dir.file("img1.jpg"));
        CHECK(result.predictions[1].label == "ocelot");
        CHECK(result.predictions[1].confidence == 1.0);
    }

    TEST_CASE("per-image failures are collected and partial captions still vote") {
        test::TempDir dir;
        const auto entries = parse_manifest(test::write_images(dir, {"ok", "partial", "broken"}), dir.path().string());
        const auto kb = cats();
        auto script = test::classify_script({{"ok", {"jaguar", "jaguar"}}, {"partial", {"ocelot"}}}, kb);
        script["partial"].push_back(MockReply::fail_with(ErrorCode::TransportError));
        script["broken"] = {MockReply::fail_with(ErrorCode::RateLimited), MockReply::fail_with(ErrorCode::RateLimited)};
        MockBackend mock(script);
        const auto result = classify_manifest(entries, ClassifyContext::flat(kb), mock, mock, options(2));
        REQUIRE(result.predictions.size() == 2);
        CHECK(result.predictions[1].image_id == "partial");
        CHECK(result.predictions[1].votes.n_valid == 1);
        REQUIRE(result.failures.size() == 1);
        CHECK(result.failures[0].image_id == "broken");
        CHECK(result.failures[0].code == "RateLimited");
    }

    TEST_CASE("seeds depend on image id, not position") {
        test::TempDir dir;
        const auto entries = parse_manifest(test::write_images(dir, {"x", "y"}), dir.path().string());
        CallbackBackend echo([](const ChatRequest&) { return "jaguar"; },
                             [](const VisionRequest& r) { return r.prompt; });
        const auto forward = classify_manifest(entries, ClassifyContext::flat(cats()), echo, echo, options(4));
        const std::vector<ManifestEntry> reversed{entries[1], entries[0]};
        const auto backward = classify_manifest(reversed, ClassifyContext::flat(cats()), echo, echo, options(4));
        CHECK(forward.predictions[0].captions == backward.predictions[1].captions);
        CHECK(forward.predictions[1].captions == backward.predictions[0].captions);
    }

    TEST_CASE("hierarchical context and classification") {
        Rng rng(4);
        test::SyntheticTaxonomy t;
        do {
            t = test::make_taxonomy(rng, 4, 60);
        } while (t.leaf_kb.entries.size() <= 8);
        const auto context = ClassifyContext::hierarchical(t.leaf_kb, t.rank_kbs);
        CHECK(context.tree.leaf_labels().size() == t.leaf_kb.entries.size());
        CHECK(context.store.contains(Rank::Genus));

        test::TempDir dir;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < t.leaf_kb.entries.size(); i += 3) ids.push_back(t.leaf_kb.entries[i].label);
        auto entries = parse_manifest(test::write_images(dir, ids), dir.path().string());
        auto chat = test::truth_telling_backend(t.lineage);
        ClassifyOptions o = options(2);
        o.hierarchical = true;
        o.hierarchy.fanout_limit = 4;
        const auto result = classify_manifest(entries, context, *chat, *chat, o);
        REQUIRE(result.predictions.size() == ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            CHECK(result.predictions[i].label == ids[i]);
            CHECK_FALSE(result.predictions[i].path.empty());
        }
    }

    TEST_CASE("missing image file is a precondition failure") {
        const auto entries = parse_manifest(R"({"image_id":"ghost","path":"/no/such/file.jpg"})");
        CallbackBackend echo([](const ChatRequest&) { return "jaguar"; },
                             [](const VisionRequest& r) { return r.prompt; });
        CHECK_THROWS_AS(classify_manifest(entries, ClassifyContext::flat(cats()), echo, echo, options(1)), Error);
    }
}
