#include "zoosight/captioner.hpp"

#include <exception>
#include <optional>

namespace zoosight {

InstructionPool InstructionPool::defaults() {
    return {{
        "Give a very detailed visual description of the animal in the photo.",
        "Describe in detail the visible body parts of the animal in the photo.",
        "What are the visual characteristics of the animal in the photo?",
        "Describe the appearance of the animal in the photo.",
        "What are the identifying characteristics of the animal visible in the photo?",
        "How would you describe the animal in the photo?",
        "What does the animal in the photo look like?",
    }};
}

InstructionPool InstructionPool::from_lines(const std::string& contents) {
    InstructionPool pool;
    for (const auto& line : split(contents, '\n')) {
        std::string t = trim(line);
        if (!t.empty()) pool.instructions.push_back(std::move(t));
    }
    pool.validate();
    return pool;
}

void InstructionPool::validate() const {
    require(!instructions.empty(), "instruction pool must be non-empty");
    for (const auto& instruction : instructions) require(!instruction.empty(), "empty instruction in pool");
}

InstructionDraw pick_instruction(const InstructionPool& pool, Rng& rng) {
    pool.validate();
    const std::size_t index = uniform_index(rng, pool.size());
    return {index, pool.instructions[index]};
}

PartialCaptions::PartialCaptions(CaptionSet partial)
    : Error(ErrorCode::PartialCaptions, "only " + std::to_string(partial.captions.size()) + " of " +
                                            std::to_string(partial.requested()) + " captions for " +
                                            partial.image_id + " succeeded"),
      partial_(std::move(partial)) {}

CaptionSet sample_captions(const ImageRef& image, const InstructionPool& pool, ModelBackend& vision,
                           const CaptionOptions& options) {
    require(options.n >= 1, "sample_captions: n must be >= 1");
    pool.validate();

    CaptionSet set;
    set.image_id = image.image_id;
    set.seed = options.seed;
    Rng rng(options.seed);
    const auto n = static_cast<std::size_t>(options.n);
    for (std::size_t i = 0; i < n; ++i) set.instruction_indices.push_back(pick_instruction(pool, rng).index);

    std::vector<std::optional<std::string>> results(n);
    std::vector<std::exception_ptr> errors(n);
    parallel_for(n, vision.max_in_flight(), [&](std::size_t i) {
        VisionRequest request{image, pool.instructions[set.instruction_indices[i]], options.temperature};
        try {
            results[i] = vision.vision(request);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Precondition) throw;
            errors[i] = std::current_exception();
        }
    });

    std::exception_ptr first_error;
    for (std::size_t i = 0; i < n; ++i) {
        if (results[i]) {
            set.captions.push_back(*results[i]);
            continue;
        }
        if (!first_error) first_error = errors[i];
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            set.failures.push_back({i, e.code(), e.what()});
        }
    }
    if (set.captions.empty()) std::rethrow_exception(first_error);
    if (!set.failures.empty()) throw PartialCaptions(std::move(set));
    return set;
}

}  // namespace zoosight
