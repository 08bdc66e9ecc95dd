#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zoosight/error.hpp"
#include "zoosight/gateway.hpp"
#include "zoosight/util.hpp"

namespace zoosight {

/// Describe-the-animal instructions used both for caption sampling and dataset generation.
struct InstructionPool {
    std::vector<std::string> instructions;

    static InstructionPool defaults();
    static InstructionPool from_lines(const std::string& contents);
    void validate() const;
    std::size_t size() const { return instructions.size(); }
};

struct InstructionDraw {
    std::size_t index;
    std::string text;
};

InstructionDraw pick_instruction(const InstructionPool& pool, Rng& rng);

struct CaptionFailure {
    std::size_t call_index;
    ErrorCode code;
    std::string message;
};

struct CaptionSet {
    std::string image_id;
    /// Successful captions in call-index order.
    std::vector<std::string> captions;
    std::uint64_t seed = 0;
    /// Instruction drawn for every call, successful or not.
    std::vector<std::size_t> instruction_indices;
    std::vector<CaptionFailure> failures;

    std::size_t requested() const { return instruction_indices.size(); }
};

/// Raised when some, but not all, caption calls failed. Carries the successful subset.
class PartialCaptions : public Error {
public:
    explicit PartialCaptions(CaptionSet partial);
    const CaptionSet& partial() const noexcept { return partial_; }

private:
    CaptionSet partial_;
};

inline constexpr int kDefaultSamples = 5;
inline constexpr double kDefaultCaptionTemperature = 0.7;

struct CaptionOptions {
    int n = kDefaultSamples;
    double temperature = kDefaultCaptionTemperature;
    std::uint64_t seed = 0;
};

/// Draws a fresh instruction per sample, then issues n vision calls (concurrently up to the backend bound).
CaptionSet sample_captions(const ImageRef& image, const InstructionPool& pool, ModelBackend& vision,
                           const CaptionOptions& options);

}  // namespace zoosight
