#pragma once

#include <string_view>
#include <vector>

#include <json.hpp>

namespace trajoracle {

/// Top-level JSON objects embedded in free text, in order of appearance.
/// Text between objects (reasoning, code fences) is ignored.
std::vector<nlohmann::json> json_objects_in(std::string_view text);

}  // namespace trajoracle
