#include <doctest.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "support/fixtures.hpp"
#include "support/golden.hpp"
#include "zoosight/augmenter.hpp"

using namespace zoosight;
using nlohmann::json;

namespace {

Image gray(int w, int h, std::uint8_t v = 128) { return Image(w, h, v, v, v); }

SpeciesEntry fox_entry() { return {"red fox", {}, "A fox with a bushy tail.", "", ""}; }

std::shared_ptr<MockBackend> scripted(const std::vector<std::pair<ChatRequest, std::string>>& turns) {
    MockScript script;
    for (const auto& [request, reply] : turns) script[chat_key(request)].push_back({reply, std::nullopt});
    return mock_from_script(script);
}

}  // namespace

TEST_SUITE("augmenter") {
    TEST_CASE("grayscale is low color variation, a saturated center pixel is not") {
        const auto report = detect_low_color_variation(gray(20, 20), 0.8, 10);
        CHECK(report.low_color_variation);
        CHECK(report.max_channel_spread == 0);

        Image red = gray(21, 21);
        red.set(10, 10, 255, 0, 0);
        const auto r = detect_low_color_variation(red, 0.8, 10);
        CHECK_FALSE(r.low_color_variation);
        CHECK(r.max_channel_spread == 255);
    }

    TEST_CASE("spread equal to epsilon is not low variation") {
        Image img = gray(10, 10, 100);
        img.set(5, 5, 110, 100, 100);
        const auto r = detect_low_color_variation(img, 0.8, 10);
        CHECK(r.max_channel_spread == 10);
        CHECK_FALSE(r.low_color_variation);
        img.set(5, 5, 109, 100, 100);
        CHECK(detect_low_color_variation(img, 0.8, 10).low_color_variation);
    }

    TEST_CASE("border pixels outside the crop never matter") {
        Rng rng(5);
        for (int trial = 0; trial < 200; ++trial) {
            const int w = 5 + static_cast<int>(uniform_index(rng, 40));
            const int h = 5 + static_cast<int>(uniform_index(rng, 40));
            const double fraction = 0.3 + 0.7 * static_cast<double>(uniform_index(rng, 100)) / 100.0;
            Image img = gray(w, h, static_cast<std::uint8_t>(uniform_index(rng, 256)));
            const auto crop = center_crop(w, h, fraction);
            REQUIRE(crop.width >= 1);
            REQUIRE(crop.x0 + crop.width <= w);
            const auto before = detect_low_color_variation(img, fraction, 10);
            Image perturbed = img;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const bool inside = x >= crop.x0 && x < crop.x0 + crop.width && y >= crop.y0 &&
                                        y < crop.y0 + crop.height;
                    if (!inside) perturbed.set(x, y, 255, 0, 0);
                }
            }
            const auto after = detect_low_color_variation(perturbed, fraction, 10);
            CHECK(after.low_color_variation == before.low_color_variation);
            CHECK(after.max_channel_spread == before.max_channel_spread);

            // Any in-crop pixel with spread >= epsilon forces the condition off.
            const int x = crop.x0 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(crop.width)));
            const int y = crop.y0 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(crop.height)));
            perturbed.set(x, y, 50, 60, 50);
            CHECK_FALSE(detect_low_color_variation(perturbed, fraction, 10).low_color_variation);
        }
    }

    TEST_CASE("image decoding via files") {
        test::TempDir dir;
        cv::Mat bgr(8, 8, CV_8UC3, cv::Scalar(0, 0, 255));
        REQUIRE(cv::imwrite(dir.file("red.png"), bgr));
        const auto img = load_image(dir.file("red.png"));
        CHECK(img.width == 8);
        CHECK(img.at(3, 3)[0] == 255);
        CHECK(img.at(3, 3)[2] == 0);
        write_file(dir.file("junk.jpg"), "not an image");
        try {
            load_image(dir.file("junk.jpg"));
            FAIL("expected DecodeError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DecodeError);
        }
        CHECK_THROWS_AS(center_crop(10, 10, 0.0), Error);
    }

    TEST_CASE("strip_color and inject render the templates") {
        CHECK(render_strip_color_request(test::kGoldenColorCaption).prompt == test::golden("strip_color.prompt.txt"));
        const auto inject = render_inject_request(test::kGoldenInjectCaption, test::kGoldenExpert);
        CHECK(inject.prompt == test::golden("inject.prompt.txt"));
        CHECK(*inject.system_message == test::golden("inject.system.txt"));
        CHECK_THROWS_AS(render_strip_color_request(""), Error);
        CHECK_THROWS_AS(render_inject_request("a cat", " "), Error);

        auto mock = scripted({{render_strip_color_request("a red fox"), "a fox"}});
        CHECK(strip_color("a red fox", *mock) == "a fox");
    }

    TEST_CASE("pseudo-caption on a grayscale image filters color before injection") {
        const auto entry = fox_entry();
        auto mock = scripted({{render_strip_color_request("a red fox"), "a fox"},
                              {render_inject_request("a fox", entry.description), "a fox with a bushy tail"}});
        const auto out = make_pseudo_caption("img", gray(16, 16), "a red fox", entry, *mock);
        CHECK(out.color_filtered);
        CHECK(out.final_caption == "a fox with a bushy tail");
        CHECK(out.expert_source_label == "red fox");
        const auto calls = mock->calls();
        REQUIRE(calls.size() == 2);
        CHECK(calls[0].prompt == render_strip_color_request("a red fox").prompt);
        CHECK(calls[1].prompt == render_inject_request("a fox", entry.description).prompt);
    }

    TEST_CASE("pseudo-caption on a colorful image only injects") {
        const auto entry = fox_entry();
        auto mock = scripted({{render_inject_request("a red fox", entry.description), "augmented"}});
        Image colorful(16, 16, 200, 80, 20);
        const auto out = make_pseudo_caption("img", colorful, "a red fox", entry, *mock);
        CHECK_FALSE(out.color_filtered);
        CHECK(out.final_caption == "augmented");
        CHECK(mock->calls().size() == 1);

        ColorPolicy off;
        off.enabled = false;
        auto mock2 = scripted({{render_inject_request("a red fox", entry.description), "augmented"}});
        CHECK_FALSE(make_pseudo_caption("img", gray(4, 4), "a red fox", entry, *mock2, off).color_filtered);
    }

    TEST_CASE("conversation placement") {
        const auto pool = InstructionPool::defaults();
        bool found = false;
        for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
            Rng rng(seed);
            const auto s = make_conversation("s", "img.jpg", "caption", pool, rng);
            if (s.instruction == pool.instructions[0] && s.image_position == ImagePosition::Before) {
                CHECK(s.human_turn() == "<image>\n" + pool.instructions[0]);
                found = true;
            }
        }
        CHECK(found);

        int before = 0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            Rng rng(seed);
            if (make_conversation("s", "i", "c", pool, rng).image_position == ImagePosition::Before) ++before;
        }
        CHECK(before >= 400);
        CHECK(before <= 600);

        Rng a(9);
        Rng b(9);
        CHECK(make_conversation("s", "i", "c", pool, a) == make_conversation("s", "i", "c", pool, b));
        CHECK_THROWS_AS(make_conversation("s", "i", " ", pool, a), Error);
    }

    TEST_CASE("dataset round-trip, duplicates and empty list") {
        std::vector<InstructionSample> samples = {
            {"a", "img/a.jpg", "Describe.", "A fox.", ImagePosition::Before},
            {"b", "img/b.jpg", "Describe.", "A cat.", ImagePosition::After},
        };
        test::TempDir dir;
        emit_dataset(samples, dir.file("d.json"));
        CHECK(load_dataset(dir.file("d.json")) == samples);
        const auto doc = json::parse(read_file(dir.file("d.json")));
        CHECK(doc[1]["conversations"][0]["value"] == "Describe.\n<image>");
        CHECK(doc[1]["conversations"][1]["from"] == "assistant");

        samples.push_back(samples[0]);
        try {
            emit_dataset(samples, dir.file("dup.json"));
            FAIL("expected DuplicateId");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DuplicateId);
        }
        emit_dataset({}, dir.file("empty.json"));
        CHECK(json::parse(read_file(dir.file("empty.json"))) == json::array());
    }

    TEST_CASE("feature list parsing") {
        CHECK(parse_feature_list("spotted coat\nlong tail") == std::vector<std::string>{"spotted coat", "long tail"});
        CHECK(parse_feature_list("  spotted coat  \n\n- long tail\n2. round ears") ==
              std::vector<std::string>{"spotted coat", "long tail", "round ears"});
        CallbackBackend empty([](const ChatRequest&) { return ""; });
        try {
            extract_feature_list("desc", empty);
            FAIL("expected EmptyFeatureList");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyFeatureList);
        }
        CallbackBackend two([](const ChatRequest& r) {
            CHECK(r.prompt.find("spotty cat") != std::string::npos);
            return "spotted coat\nlong tail";
        });
        CHECK(extract_feature_list("spotty cat", two).size() == 2);
    }

    TEST_CASE("combining visible features") {
        std::vector<FeatureVisibility> hidden = {{"tail", Visibility::None}, {"ears", Visibility::None}};
        CallbackBackend never([](const ChatRequest&) -> std::string { throw std::logic_error("no call expected"); });
        try {
            combine_visible_features(hidden, true, never);
            FAIL("expected NoVisibleFeatures");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NoVisibleFeatures);
        }

        std::vector<FeatureVisibility> features = {
            {"spotted coat", Visibility::Full}, {"long tail", Visibility::Partial}, {"ears", Visibility::None}};
        const auto request = render_combine_request(features);
        CHECK(request.prompt.find("- spotted coat\n- long tail (partially visible)") != std::string::npos);
        CHECK(request.prompt.find("ears") == std::string::npos);

        std::vector<std::string> prompts_seen;
        CallbackBackend chat([&](const ChatRequest& r) {
            prompts_seen.push_back(r.prompt);
            return prompts_seen.size() == 1 ? "a brown cat with spots" : "a cat with spots";
        });
        CHECK(combine_visible_features(features, true, chat) == "a brown cat with spots");
        CHECK(prompts_seen.size() == 1);
        prompts_seen.clear();
        CHECK(combine_visible_features(features, false, chat) == "a cat with spots");
        REQUIRE(prompts_seen.size() == 2);
        CHECK(prompts_seen[1] == render_strip_color_request("a brown cat with spots").prompt);

        CHECK(visibility_from_string("Partially visible") == Visibility::Partial);
        CHECK_THROWS_AS(visibility_from_string("maybe"), Error);
    }
}
