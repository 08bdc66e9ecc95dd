#include <doctest.h>

#include "support/fixtures.hpp"
#include "support/golden.hpp"
#include "zoosight/augmenter.hpp"
#include "zoosight/caption_scorer.hpp"
#include "zoosight/knowledge_base.hpp"
#include "zoosight/matcher.hpp"
#include "zoosight/prompts.hpp"

using namespace zoosight;

namespace {

std::size_t count(std::string_view text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
    return n;
}

}  // namespace

TEST_SUITE("prompts") {
    TEST_CASE("rendered prompts match the golden files byte for byte") {
        const auto summary = render_summary_request(test::kGoldenArticle);
        CHECK(summary.prompt == test::golden("summarize.prompt.txt"));
        CHECK(summary.system_message == test::golden("summarize.system.txt"));

        CHECK(render_strip_color_request(test::kGoldenColorCaption).prompt == test::golden("strip_color.prompt.txt"));

        const auto inject = render_inject_request(test::kGoldenInjectCaption, test::kGoldenExpert);
        CHECK(inject.prompt == test::golden("inject.prompt.txt"));
        CHECK(inject.system_message == test::golden("inject.system.txt"));

        const auto match = render_matching_prompt(test::kGoldenMatchCaption, test::golden_match_kb());
        CHECK(match.prompt == test::golden("match.prompt.txt"));
        CHECK(match.system_message == test::golden("match.system.txt"));

        CHECK(render_relevance_prompt(test::kGoldenReference, test::kGoldenGenerated).prompt ==
              test::golden("relevance.prompt.txt"));
        CHECK(render_hallucination_prompt(test::kGoldenReference, test::kGoldenGenerated).prompt ==
              test::golden("hallucination.prompt.txt"));
    }

    TEST_CASE("placeholder counts") {
        CHECK(count(prompts::kSummarizePrompt, prompts::kWikiArticle) == 1);
        CHECK(count(prompts::kStripColorPrompt, prompts::kLmmCaption) == 1);
        CHECK(count(prompts::kInjectPrompt, prompts::kLmmCaption) == 1);
        CHECK(count(prompts::kInjectPrompt, prompts::kExpertDescr) == 1);
        CHECK(count(prompts::kMatchPrompt, prompts::kKnowledgeBase) == 1);
        CHECK(count(prompts::kMatchPrompt, prompts::kLmmCaption) == 1);
        CHECK(count(prompts::kMatchPrompt, prompts::kSpeciesList) == 2);
        CHECK(count(prompts::kRelevancePrompt, prompts::kExpertDescr) == 1);
        CHECK(count(prompts::kHallucinationPrompt, prompts::kLmmCaption) == 1);
        CHECK(count(prompts::kFeatureListPrompt, prompts::kExpertDescr) == 1);
        CHECK(count(prompts::kFeatureCombinePrompt, prompts::kFeatureList) == 1);
        CHECK(prompts::kInjectSystem == prompts::kSummarizeSystem);
    }

    TEST_CASE("substituted text is not rescanned for placeholders") {
        const std::string tricky = "a <LMM_CAPTION> b";
        const auto req = render_inject_request(tricky, "<EXPERT_DESCR>");
        CHECK(count(req.prompt, tricky) == 1);
        CHECK(count(req.prompt, "<EXPERT_DESCR>") == 1);
    }

    TEST_CASE("template overrides load verbatim") {
        test::TempDir dir;
        write_file(dir.file("t.txt"), "Features: <FEATURE_LIST>\n");
        CHECK(prompts::load_template(dir.file("t.txt")) == "Features: <FEATURE_LIST>\n");
        CHECK_THROWS_AS(prompts::load_template(dir.file("missing.txt")), Error);
    }
}
