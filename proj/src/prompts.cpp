#include "zoosight/prompts.hpp"

#include "zoosight/util.hpp"

namespace zoosight::prompts {

std::string load_template(const std::string& path) { return read_file(path); }

}  // namespace zoosight::prompts
