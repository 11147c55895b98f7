#include "trajoracle/vgls.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "trajoracle/error.hpp"
#include "trajoracle/json_scan.hpp"

namespace trajoracle {
namespace {

using json = nlohmann::ordered_json;

std::optional<Choice> ans_value(const nlohmann::json& v) {
  if (v.is_number_integer() || v.is_number_unsigned()) {
    const auto n = v.get<long long>();
    if (n == 0) return Choice::Blue;
    if (n == 1) return Choice::Yellow;
    return std::nullopt;
  }
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    if (s == "0") return Choice::Blue;
    if (s == "1") return Choice::Yellow;
  }
  return std::nullopt;
}

json rect_json(const PixelRect& r) { return json::array({r.x0, r.y0, r.x1, r.y1}); }

PixelRect rect_from(const nlohmann::json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

std::string answer_text(Choice c) { return c == Choice::Blue ? "{\"ANS\": 0}" : "{\"ANS\": 1}"; }

Choice choice_for(const SplitSpec& split, Half h) { return h == split.blue_half ? Choice::Blue : Choice::Yellow; }

Half half_for(const SplitSpec& split, Choice c) {
  if (c == Choice::Blue) return split.blue_half;
  return split.blue_half == Half::Low ? Half::High : Half::Low;
}

class PerfectOracle final : public Oracle {
 public:
  explicit PerfectOracle(PixelPoint truth) : truth_(truth) {}
  std::string ask(const OracleRequest& req) override {
    if (!req.vgls) throw Error(ErrorCode::InvalidInput, "mock oracle needs VGLS geometry");
    return answer_text(choice_for(req.vgls->split, half_containing(req.vgls->split, truth_)));
  }

 private:
  PixelPoint truth_;
};

// Each answer is drawn from a generator seeded by the request key, so a
// resumed run asks the same questions and gets the same answers.
class NoisyOracle final : public Oracle {
 public:
  NoisyOracle(PixelPoint truth, double p, std::uint64_t seed, bool pure_random)
      : truth_(truth), p_(p), seed_(seed), pure_random_(pure_random) {}
  std::string ask(const OracleRequest& req) override {
    if (!req.vgls) throw Error(ErrorCode::InvalidInput, "mock oracle needs VGLS geometry");
    std::mt19937_64 rng(seed_ ^ fnv1a64(req.key()));
    if (pure_random_) {
      return answer_text((rng() & 1U) ? Choice::Yellow : Choice::Blue);
    }
    const Choice right = choice_for(req.vgls->split, half_containing(req.vgls->split, truth_));
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return answer_text(u < p_ ? right : (right == Choice::Blue ? Choice::Yellow : Choice::Blue));
  }

 private:
  PixelPoint truth_;
  double p_;
  std::uint64_t seed_;
  bool pure_random_;
};

class ReplayOracle final : public Oracle {
 public:
  explicit ReplayOracle(const VglsTranscript& t) {
    for (const VglsRound& r : t.rounds) {
      for (std::size_t a = 0; a < r.replies.size(); ++a) {
        replies_[{r.round, static_cast<int>(a)}] = r.replies[a];
      }
    }
  }
  std::string ask(const OracleRequest& req) override {
    auto it = replies_.find({req.round, req.attempt});
    if (it == replies_.end()) {
      throw Error(ErrorCode::OracleTransport, "replay transcript has no reply for this round");
    }
    return it->second;
  }

 private:
  std::map<std::pair<int, int>, std::string> replies_;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string OracleRequest::key() const {
  return traj_id + "|" + purpose + "|" + std::to_string(round) + "|" + std::to_string(attempt);
}

OracleAnswer parse_vgls_answer(std::string_view raw_text) {
  OracleAnswer out;
  out.raw_text = std::string(raw_text);
  const auto objects = json_objects_in(raw_text);
  for (auto it = objects.rbegin(); it != objects.rend(); ++it) {
    if (!it->contains("ANS")) continue;
    if (auto c = ans_value((*it)["ANS"])) {
      out.choice = c;
      out.parse_ok = true;
      break;
    }
  }
  return out;
}

SplitSpec split_region(const PixelRect& r, int round) {
  (void)round;  // the rule is the same every round
  if (r.width() <= 0 || r.height() <= 0) {
    throw Error(ErrorCode::InvalidInput, "region is degenerate");
  }
  SplitSpec s;
  s.blue_half = Half::Low;
  if (r.width() >= r.height()) {
    s.axis = SplitAxis::Vertical;
    s.boundary = r.x0 + r.width() / 2;
    if (s.boundary - r.x0 < 2 || r.x1 - s.boundary < 2) {
      throw Error(ErrorCode::RegionTooSmall, "region too narrow to split");
    }
  } else {
    s.axis = SplitAxis::Horizontal;
    s.boundary = r.y0 + r.height() / 2;
    if (s.boundary - r.y0 < 2 || r.y1 - s.boundary < 2) {
      throw Error(ErrorCode::RegionTooSmall, "region too short to split");
    }
  }
  return s;
}

Half half_containing(const SplitSpec& split, const PixelPoint& p) noexcept {
  const double v = split.axis == SplitAxis::Vertical ? p.x : p.y;
  return v <= split.boundary ? Half::Low : Half::High;
}

VglsSession::VglsSession(std::string traj_id, const Viewport& vp, std::function<Canvas()> render_base,
                         Oracle& oracle, VglsOptions options)
    : traj_id_(std::move(traj_id)),
      vp_(vp),
      render_base_(std::move(render_base)),
      oracle_(oracle),
      options_(std::move(options)),
      rng_(options_.seed ^ fnv1a64(traj_id_)),
      region_{0, 0, vp.width(), vp.height()} {
  if (options_.rounds < 1) {
    throw Error(ErrorCode::InvalidInput, "VGLS needs at least one round");
  }
  if (options_.parse_retries < 0) {
    throw Error(ErrorCode::InvalidInput, "parse retries must be non-negative");
  }
  transcript_.traj_id = traj_id_;
  transcript_.planned_rounds = options_.rounds;
}

bool VglsSession::done() const noexcept {
  return transcript_.aborted || static_cast<int>(transcript_.rounds.size()) >= options_.rounds;
}

const Canvas& VglsSession::base() {
  if (!base_) {
    base_ = render_base_ ? render_base_() : Canvas(vp_.width(), vp_.height());
  }
  return *base_;
}

std::vector<std::uint8_t> VglsSession::round_png(const PixelRect& region, const SplitSpec& split, int round) {
  Canvas img = base();
  draw_vgls_overlay(img, region, split, options_.style);
  std::vector<std::uint8_t> png = encode_png(img);
  if (options_.image_dir) {
    std::filesystem::create_directories(*options_.image_dir);
    const auto path = std::filesystem::path(*options_.image_dir) / (traj_id_ + "_round" + std::to_string(round) + ".png");
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  }
  return png;
}

bool VglsSession::step() {
  if (done()) return false;
  const int round = static_cast<int>(transcript_.rounds.size()) + 1;
  SplitSpec split;
  try {
    split = split_region(region_, round);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RegionTooSmall) throw;
    transcript_.aborted = true;
    transcript_.abort_reason = "RegionTooSmall";
    return false;
  }

  VglsRound rec;
  rec.round = round;
  rec.before = region_;
  rec.split = split;

  std::optional<std::vector<std::uint8_t>> png;
  if (options_.image_dir) {
    png = round_png(region_, split, round);
  }
  const PixelRect region = region_;
  for (int attempt = 0; attempt <= options_.parse_retries; ++attempt) {
    OracleRequest req;
    req.traj_id = traj_id_;
    req.purpose = "vgls";
    req.round = round;
    req.attempt = attempt;
    req.prompt_text = options_.prompt_text;
    req.vgls = VglsQuestion{region, split};
    req.image_png = [this, &png, region, split, round]() {
      if (!png) png = round_png(region, split, round);
      return *png;
    };
    std::string reply = oracle_.ask(req);
    const OracleAnswer ans = parse_vgls_answer(reply);
    rec.replies.push_back(std::move(reply));
    if (ans.parse_ok) {
      rec.parse_ok = true;
      rec.choice = *ans.choice;
      break;
    }
  }
  if (!rec.parse_ok) {
    if (options_.policy == UnparseablePolicy::Abort) {
      transcript_.rounds.push_back(rec);
      transcript_.aborted = true;
      transcript_.abort_reason = "OracleUnparseable";
      return false;
    }
    rec.resolved_by = Resolution::CoinFlip;
    rec.choice = (rng_() & 1U) ? Choice::Yellow : Choice::Blue;
  }
  rec.after = half_of(region_, split, half_for(split, rec.choice));
  region_ = rec.after;
  transcript_.rounds.push_back(std::move(rec));
  return !done();
}

void VglsSession::finish() {
  transcript_.final_region = region_;
  transcript_.final_center_px = region_.center();
  transcript_.final_center_geo = vp_.unproject(transcript_.final_center_px);
}

const VglsTranscript& VglsSession::transcript() {
  finish();
  return transcript_;
}

VglsTranscript run_vgls(const std::string& traj_id, std::span<const GeoPoint> prefix, const Viewport& vp,
                        const RoadNetwork& net, Oracle& oracle, const VglsOptions& options) {
  std::vector<GeoPoint> pts(prefix.begin(), prefix.end());
  const RenderStyle style = options.style;
  auto render = [&vp, &net, pts, style]() {
    Canvas c = render_base_map(vp, net, style);
    draw_trajectory(c, vp, pts, style);
    return c;
  };
  VglsSession session(traj_id, vp, render, oracle, options);
  while (session.step()) {
  }
  return session.transcript();
}

std::unique_ptr<Oracle> make_mock_oracle(MockKind kind, PixelPoint truth, double p, std::uint64_t seed) {
  switch (kind) {
    case MockKind::Perfect: return std::make_unique<PerfectOracle>(truth);
    case MockKind::Random: return std::make_unique<NoisyOracle>(truth, 0.5, seed, true);
    case MockKind::Noisy:
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidInput, "noisy oracle p must be in [0,1]");
      return std::make_unique<NoisyOracle>(truth, p, seed, false);
  }
  throw Error(ErrorCode::InvalidInput, "unknown mock kind");
}

std::unique_ptr<Oracle> make_replay_oracle(const VglsTranscript& transcript) {
  return std::make_unique<ReplayOracle>(transcript);
}

std::string transcript_to_jsonl(const VglsTranscript& t) {
  std::string out;
  for (const VglsRound& r : t.rounds) {
    json line;
    line["traj_id"] = t.traj_id;
    line["round"] = r.round;
    line["region_before"] = rect_json(r.before);
    line["split"] = {{"axis", r.split.axis == SplitAxis::Vertical ? "vertical" : "horizontal"},
                     {"boundary", r.split.boundary},
                     {"blue_half", r.split.blue_half == Half::Low ? "low" : "high"}};
    line["replies"] = r.replies;
    line["parse_ok"] = r.parse_ok;
    const bool has_choice = r.parse_ok || r.resolved_by == Resolution::CoinFlip;
    line["choice"] = has_choice ? json(r.choice == Choice::Blue ? "blue" : "yellow") : json(nullptr);
    line["resolved_by"] = r.resolved_by == Resolution::Oracle ? "oracle" : "coin_flip";
    line["region_after"] = has_choice ? rect_json(r.after) : json(nullptr);
    out += line.dump() + "\n";
  }
  json fin;
  fin["traj_id"] = t.traj_id;
  fin["final"] = true;
  fin["planned_rounds"] = t.planned_rounds;
  fin["rounds"] = t.rounds.size();
  fin["aborted"] = t.aborted;
  fin["abort_reason"] = t.abort_reason;
  fin["final_region"] = rect_json(t.final_region);
  fin["center_px"] = {t.final_center_px.x, t.final_center_px.y};
  fin["center_geo"] = {t.final_center_geo.lat, t.final_center_geo.lon};
  out += fin.dump() + "\n";
  return out;
}

VglsTranscript transcript_from_jsonl(std::string_view text) {
  VglsTranscript t;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::ParseError, "bad transcript line");
    }
    try {
      t.traj_id = j.at("traj_id").get<std::string>();
      if (j.value("final", false)) {
        t.planned_rounds = j.at("planned_rounds").get<int>();
        t.aborted = j.at("aborted").get<bool>();
        t.abort_reason = j.at("abort_reason").get<std::string>();
        t.final_region = rect_from(j.at("final_region"));
        t.final_center_px = {j.at("center_px").at(0).get<double>(), j.at("center_px").at(1).get<double>()};
        t.final_center_geo = {j.at("center_geo").at(0).get<double>(), j.at("center_geo").at(1).get<double>()};
        continue;
      }
      VglsRound r;
      r.round = j.at("round").get<int>();
      r.before = rect_from(j.at("region_before"));
      const auto& s = j.at("split");
      r.split.axis = s.at("axis").get<std::string>() == "vertical" ? SplitAxis::Vertical : SplitAxis::Horizontal;
      r.split.boundary = s.at("boundary").get<int>();
      r.split.blue_half = s.at("blue_half").get<std::string>() == "low" ? Half::Low : Half::High;
      r.replies = j.at("replies").get<std::vector<std::string>>();
      r.parse_ok = j.at("parse_ok").get<bool>();
      r.resolved_by = j.at("resolved_by").get<std::string>() == "oracle" ? Resolution::Oracle : Resolution::CoinFlip;
      if (!j.at("choice").is_null()) {
        r.choice = j.at("choice").get<std::string>() == "blue" ? Choice::Blue : Choice::Yellow;
        r.after = rect_from(j.at("region_after"));
      }
      t.rounds.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("bad transcript line: ") + e.what());
    }
  }
  return t;
}

}  // namespace trajoracle
