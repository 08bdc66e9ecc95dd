#pragma once

#include <string>
#include <string_view>

namespace zoosight::prompts {

// Placeholders are substituted verbatim.
inline constexpr std::string_view kWikiArticle = "<WIKI_ARTICLE>";
inline constexpr std::string_view kLmmCaption = "<LMM_CAPTION>";
inline constexpr std::string_view kExpertDescr = "<EXPERT_DESCR>";
inline constexpr std::string_view kKnowledgeBase = "<KNOWLEDGE_BASE>";
inline constexpr std::string_view kSpeciesList = "<SPECIES_LIST>";
inline constexpr std::string_view kFeatureList = "<FEATURE_LIST>";

// Visually relevant summarization of an encyclopedia article.
inline constexpr std::string_view kSummarizeSystem =
    "You are an AI assistant specialized in biology and providing accurate and detailed descriptions of "
    "animal species.";
inline constexpr std::string_view kSummarizePrompt =
    "You are given the description of an animal species. Provide a very detailed description of the "
    "appearance of the species and describe each body part of the animal in detail. Only include details "
    "that can be directly visible in a photograph of the animal. Only include information related to the "
    "appearance of the animal and nothing else. Make sure to only include information that is present in "
    "the species description and is certainly true for the given species. Do not include any information "
    "related to the sound or smell of the animal. Do not include any numerical information related to "
    "measurements in the text in units: m, cm, in, inches, ft, feet, km/h, kg, lb, lbs. Remove any special "
    "characters such as unicode tags from the text. Return the answer as a single paragraph. Species "
    "description: <WIKI_ARTICLE> Answer:";

// Color removal for captions of low color variation images.
inline constexpr std::string_view kStripColorPrompt =
    "This is the description of an animal in a photograph: <LMM_CAPTION>. Remove any mentions of color "
    "other than black or white. Answer:";

// Expert knowledge injection.
inline constexpr std::string_view kInjectSystem = kSummarizeSystem;
inline constexpr std::string_view kInjectPrompt =
    "This is an expert description of the appearance of an animal species: <EXPERT_DESCR>. This is an "
    "image description of the same species I can see in a photograph: <LMM_CAPTION>. Imagine that you can "
    "also see this photo and perform the following steps:\n"
    "1. Rewrite the image description by adding details from the expert description of the species that "
    "are visible in the photo. Make sure you only add details about body parts of the animal already "
    "present in the image description.\n"
    "2. Remove any information from the image description which directly contradicts the expert "
    "description.\n"
    "3. Do not mention the species name in the description and do not try to guess the species.\n"
    "Answer:";

// Description matching against a knowledge base.
inline constexpr std::string_view kMatchSystem =
    "You are an AI expert in biology specialized in animal species identification.";
inline constexpr std::string_view kMatchPrompt =
    "<KNOWLEDGE_BASE>\n"
    "Question: You are given the following description of an animal: <LMM_CAPTION>. What is the most "
    "likely animal being described from the following list: <SPECIES_LIST>. Make sure your answer is a "
    "single word from the list <SPECIES_LIST>.\n"
    "Answer:";

// Caption quality scoring.
inline constexpr std::string_view kRelevancePrompt =
    "You are given two descriptions of an image: Description A and Description B. Description A is the "
    "correct and accurate description of the image. Your job is to score on a scale from 1 to 10 how well "
    "Description B describes the image. Follow these rules:\n"
    "1. Only give the maximum score of 10, if Description B contains all the information in Description "
    "A.\n"
    "2. Only give the score of 1 if Description B contains no information that is given in Description "
    "A.\n"
    "3. Otherwise, assign scores from 2 to 9 to assess how much information from Description A is "
    "mentioned in Description B (the higher score the more information from Description A is present in "
    "Description B).\n"
    "4. Disregard any information in Description B that is not mentioned in Description A in your "
    "scoring.\n"
    "5. Your answer is a single score from 1 to 10 without accompanying explanation of the score.\n"
    "Description A: <EXPERT_DESCR>\n"
    "Description B: <LMM_CAPTION>\n"
    "Your score:";

// The published hallucination rubric has no rule 4; kept as published.
inline constexpr std::string_view kHallucinationPrompt =
    "You are given two descriptions of an image: Description A and Description B. Description A is the "
    "correct and accurate description of the image. Definition of a hallucination: a hallucination is a "
    "detail in Description B that is not mentioned in Description A. Your job is to score on a scale from "
    "1 to 10 how accurately Description B describes the image, assigning higher score to descriptions with "
    "less hallucinations. Follow these rules:\n"
    "1. Only give the maximum score of 10, if Description B contains all information from Description A "
    "and Description B does not contain any hallucinations.\n"
    "2. Only give the score of 1 if Description B contains no information that is given in Description A, "
    "but may contain any number of hallucinated details.\n"
    "3. Otherwise, assign scores from 2 to 9 to assess how much hallucinated information is present in "
    "Description B: the higher the score the less hallucinations are present in Description B.\n"
    "5. Your answer is a single score from 1 to 10 without accompanying explanation of the score.\n"
    "Description A: <EXPERT_DESCR>\n"
    "Description B: <LMM_CAPTION>\n"
    "Your score:";

// Manual-caption helpers. These two are project-authored; bump the version when editing.
inline constexpr std::string_view kFeatureListVersion = "feature_list/v1";
inline constexpr std::string_view kFeatureListPrompt =
    "This is an expert description of the appearance of an animal species: <EXPERT_DESCR>. Extract a list "
    "of visible features of the animal that could be checked in a photograph, such as body parts, markings "
    "and coat patterns. Write exactly one short feature per line without numbering, bullet points or any "
    "other text. Answer:";

inline constexpr std::string_view kFeatureCombineVersion = "feature_combine/v1";
inline constexpr std::string_view kFeatureCombinePrompt =
    "These are visual features of an animal that are visible in a photograph:\n"
    "<FEATURE_LIST>\n"
    "Combine these features into a single descriptive caption of the animal in the photograph. Describe "
    "partially visible features as partially visible. Do not add any other details and do not mention the "
    "species name. Answer:";

/// Loads a template override from disk, keeping placeholders intact.
std::string load_template(const std::string& path);

}  // namespace zoosight::prompts
