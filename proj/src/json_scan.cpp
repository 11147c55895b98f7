#include "trajoracle/json_scan.hpp"

namespace trajoracle {
namespace {

// Index one past the brace closing the object opened at `open`, or npos.
std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) {
        return i + 1;
      }
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::vector<nlohmann::json> json_objects_in(std::string_view text) {
  std::vector<nlohmann::json> out;
  std::size_t i = 0;
  while ((i = text.find('{', i)) != std::string_view::npos) {
    const std::size_t end = match_object(text, i);
    if (end != std::string_view::npos) {
      const std::string_view candidate = text.substr(i, end - i);
      auto parsed = nlohmann::json::parse(candidate.begin(), candidate.end(), nullptr, false);
      if (!parsed.is_discarded() && parsed.is_object()) {
        out.push_back(std::move(parsed));
        i = end;
        continue;
      }
    }
    ++i;
  }
  return out;
}

}  // namespace trajoracle
