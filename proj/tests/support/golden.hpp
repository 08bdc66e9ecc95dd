#pragma once

#include <string>

#include "zoosight/knowledge_base.hpp"
#include "zoosight/util.hpp"

namespace zoosight::test {

inline std::string golden(const std::string& name) { return read_file(std::string(ZOOSIGHT_GOLDEN_DIR) + "/" + name); }

// Substitutions the committed golden files were written for.
inline constexpr const char* kGoldenArticle = "X";
inline constexpr const char* kGoldenColorCaption = "a red fox";
inline constexpr const char* kGoldenExpert = "cat desc";
inline constexpr const char* kGoldenInjectCaption = "a cat";
inline constexpr const char* kGoldenReference = "A";
inline constexpr const char* kGoldenGenerated = "B";
inline constexpr const char* kGoldenMatchCaption = "x";

inline KnowledgeBase golden_match_kb() {
    KnowledgeBase kb;
    kb.rank = Rank::Species;
    kb.entries.push_back({"jaguar", {}, "A large spotted cat.", "", ""});
    kb.entries.push_back({"ocelot", {}, "A medium-sized spotted cat.", "", ""});
    return kb;
}

}  // namespace zoosight::test
