#include "trajoracle/rewards.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

namespace trajoracle {
namespace {

struct Block {
  std::string_view body;
  std::size_t end = 0;  // one past the closing tag
};

std::optional<Block> tagged_block(std::string_view text, std::string_view open, std::string_view close,
                                  std::size_t from) {
  const std::size_t o = text.find(open, from);
  if (o == std::string_view::npos) return std::nullopt;
  const std::size_t start = o + open.size();
  const std::size_t c = text.find(close, start);
  if (c == std::string_view::npos) return std::nullopt;
  return Block{text.substr(start, c - start), c + close.size()};
}

class Cursor {
 public:
  Cursor(std::string_view s, std::size_t pos) : s_(s), pos_(pos) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::optional<double> number() {
    skip_ws();
    std::size_t p = pos_;
    if (p < s_.size() && (s_[p] == '-' || s_[p] == '+')) ++p;
    const std::size_t digits = p;
    while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p;
    if (p == digits) return std::nullopt;
    if (p < s_.size() && s_[p] == '.') {
      ++p;
      while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p;
    }
    std::string token(s_.substr(pos_, p - pos_));
    if (!token.empty() && token[0] == '+') token.erase(0, 1);
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) return std::nullopt;
    pos_ = p;
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view s_;
  std::size_t pos_;
};

std::optional<PixelPoint> tuple_at(std::string_view s, std::size_t& pos) {
  Cursor c(s, pos);
  if (!c.eat('(')) return std::nullopt;
  auto x = c.number();
  if (!x || !c.eat(',')) return std::nullopt;
  auto y = c.number();
  if (!y || !c.eat(')')) return std::nullopt;
  pos = c.pos();
  return PixelPoint{*x, *y};
}

bool on_grid(const PixelPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 && p.x <= kModelGrid &&
         p.y <= kModelGrid;
}

std::optional<PixelPoint> find_point(std::string_view answer) {
  std::optional<PixelPoint> lone;
  for (std::size_t i = answer.find('('); i != std::string_view::npos; i = answer.find('(', i + 1)) {
    std::size_t pos = i;
    const auto first = tuple_at(answer, pos);
    if (!first) continue;
    Cursor c(answer, pos);
    if (c.eat(',')) {
      std::size_t pos2 = c.pos();
      if (const auto second = tuple_at(answer, pos2)) {
        if (on_grid(*first) && on_grid(*second)) {
          return PixelPoint{(first->x + second->x) / 2.0, (first->y + second->y) / 2.0};
        }
        i = pos2 - 1;
        continue;
      }
    }
    if (!lone && on_grid(*first)) lone = first;
  }
  return lone;
}

bool is_decoration(char c) { return c == '*' || c == '#' || c == '_' || c == '>' || c == ' ' || c == '`'; }

// Number of the enumerator that starts `line`, if any.
std::optional<int> leading_enumerator(std::string_view line) {
  if (!line.empty() && line[0] == '\t') return std::nullopt;
  if (line.size() >= 2 && line[0] == ' ' && line[1] == ' ') return std::nullopt;  // nested
  std::size_t p = 0;
  while (p < line.size() && is_decoration(line[p])) ++p;
  line.remove_prefix(p);

  bool step_word = false;
  if (line.size() >= 4) {
    std::string head;
    for (int k = 0; k < 4; ++k) head += static_cast<char>(std::tolower(static_cast<unsigned char>(line[k])));
    if (head == "step") {
      step_word = true;
      line.remove_prefix(4);
      while (!line.empty() && line[0] == ' ') line.remove_prefix(1);
    }
  }
  std::size_t d = 0;
  while (d < line.size() && d < 4 && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
  if (d == 0 || d > 3) return std::nullopt;
  const int n = std::stoi(std::string(line.substr(0, d)));
  const char next = d < line.size() ? line[d] : '\0';
  if (step_word) {
    if (std::isdigit(static_cast<unsigned char>(next))) return std::nullopt;
    return n;
  }
  if (next != '.' && next != ')') return std::nullopt;
  const char after = d + 1 < line.size() ? line[d + 1] : '\0';
  if (std::isdigit(static_cast<unsigned char>(after))) return std::nullopt;  // "1.5" is a number
  return n;
}

}  // namespace

int count_steps(std::string_view think_text) {
  std::set<int> seen;
  std::size_t start = 0;
  while (start <= think_text.size()) {
    std::size_t nl = think_text.find('\n', start);
    if (nl == std::string_view::npos) nl = think_text.size();
    std::string_view line = think_text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto n = leading_enumerator(line)) seen.insert(*n);
    start = nl + 1;
  }
  return static_cast<int>(seen.size());
}

ParsedResponse parse_response(std::string_view raw_text) {
  ParsedResponse out;
  std::size_t answer_from = 0;
  if (auto think = tagged_block(raw_text, "<think>", "</think>", 0)) {
    out.has_think_tags = true;
    out.think_text = std::string(think->body);
    out.step_count = count_steps(think->body);
    answer_from = think->end;
  }
  if (auto answer = tagged_block(raw_text, "<answer>", "</answer>", answer_from)) {
    out.has_answer_tags = true;
    out.answer_text = std::string(answer->body);
    if (auto pt = find_point(answer->body)) {
      out.boxed_point = pt;
      out.has_valid_tuple = true;
    }
  }
  return out;
}

std::string serialize_response(const ParsedResponse& p) {
  std::string out;
  if (p.think_text) out += "<think>" + *p.think_text + "</think>";
  if (p.answer_text) out += "<answer>" + *p.answer_text + "</answer>";
  return out;
}

double distance_reward(const std::optional<PixelPoint>& pred, const PixelPoint& truth) {
  if (!pred) return 0.0;
  const double dis = pixel_distance(*pred, truth);
  return dis <= kDistanceRewardCutoffPx ? 1.0 - dis / kDistanceRewardCutoffPx : 0.0;
}

double road_reward(const std::optional<PixelPoint>& pred, const SegmentIndex& idx) {
  if (!pred || idx.segments().empty()) return 0.0;
  const double dis = idx.nearest_distance(*pred);
  return dis <= kRoadRewardCutoffPx ? 1.0 - dis / kRoadRewardCutoffPx : 0.0;
}

double format_reward(const ParsedResponse& p) {
  if (!(p.has_think_tags && p.has_answer_tags)) return 0.0;
  return p.has_valid_tuple ? 2.0 : 1.0;
}

double step_reward(const ParsedResponse& p) {
  if (p.step_count >= kStepRewardTarget) return 1.0;
  return 1.0 - static_cast<double>(kStepRewardTarget - p.step_count) / kStepRewardTarget;
}

PixelPoint grid_to_canvas(const PixelPoint& grid, int width_px, int height_px) noexcept {
  return {grid.x * width_px / kModelGrid, grid.y * height_px / kModelGrid};
}

PixelPoint canvas_to_grid(const PixelPoint& px, int width_px, int height_px) noexcept {
  return {px.x * kModelGrid / width_px, px.y * kModelGrid / height_px};
}

RewardVector score_response(std::string_view raw_text, const PixelPoint& truth, const SegmentIndex& idx,
                            const RewardWeights& weights) {
  const ParsedResponse parsed = parse_response(raw_text);
  std::optional<PixelPoint> pred;
  if (parsed.boxed_point) pred = grid_to_canvas(*parsed.boxed_point, idx.width(), idx.height());
  RewardVector r;
  r.r_dis = distance_reward(pred, truth);
  r.r_road = road_reward(pred, idx);
  r.r_format = format_reward(parsed);
  r.r_step = step_reward(parsed);
  r.total = weights.dis * r.r_dis + weights.road * r.r_road + weights.format * r.r_format + weights.step * r.r_step;
  return r;
}

}  // namespace trajoracle
