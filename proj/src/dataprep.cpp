#include "trajoracle/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "trajoracle/error.hpp"
#include "trajoracle/hash.hpp"
#include "trajoracle/json_scan.hpp"
#include "trajoracle/rewards.hpp"
#include "trajoracle/vgls.hpp"

namespace trajoracle {
namespace {

using ojson = nlohmann::ordered_json;

// Uniform draw on [0, n) by rejection, identical across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

const char* task_name(SftTask t) { return t == SftTask::Localization ? "localization" : "cot"; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

DatasetSplit make_split(std::span<const std::string> ids, std::uint64_t seed) {
  if (ids.size() < 10) {
    throw Error(ErrorCode::TooFewTrajectories, "need at least 10 trajectories, got " + std::to_string(ids.size()));
  }
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::InvalidInput, "duplicate trajectory id: " + id);
  }
  std::vector<std::string> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_below(rng, i + 1)]);
  }
  const std::size_t n = order.size();
  const auto n_train = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n)));
  DatasetSplit s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

ojson split_to_json(const DatasetSplit& s) {
  ojson j;
  j["seed"] = s.seed;
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  return j;
}

DatasetSplit split_from_json(const nlohmann::json& j) {
  try {
    DatasetSplit s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad split file: ") + e.what());
  }
}

ojson record_to_json(const SftRecord& r) {
  ojson j;
  j["image_path"] = r.image_path;
  j["prompt_text"] = r.prompt_text;
  j["target_text"] = r.target_text;
  j["task"] = task_name(r.task);
  ojson meta;
  meta["traj_id"] = r.meta.traj_id;
  meta["point_index"] = r.meta.point_index;
  meta["confidence"] = r.meta.confidence ? ojson(*r.meta.confidence) : ojson(nullptr);
  j["meta"] = std::move(meta);
  return j;
}

SftRecord record_from_json(const nlohmann::json& j) {
  try {
    SftRecord r;
    r.image_path = j.at("image_path").get<std::string>();
    r.prompt_text = j.at("prompt_text").get<std::string>();
    r.target_text = j.at("target_text").get<std::string>();
    const auto task = j.at("task").get<std::string>();
    if (task != "localization" && task != "cot") throw Error(ErrorCode::ParseError, "unknown task: " + task);
    r.task = task == "cot" ? SftTask::Cot : SftTask::Localization;
    const auto& m = j.at("meta");
    r.meta.traj_id = m.at("traj_id").get<std::string>();
    r.meta.point_index = m.at("point_index").get<int>();
    if (m.contains("confidence") && !m["confidence"].is_null()) r.meta.confidence = m["confidence"].get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad SFT record: ") + e.what());
  }
}

GridCell grid_cell(const PixelPoint& canvas_px, int width_px, int height_px) noexcept {
  auto cell = [](double v, int extent) {
    const double g = std::floor(v * kModelGrid / extent);
    return static_cast<int>(std::clamp(g, 0.0, kModelGrid - 1.0));
  };
  return {cell(canvas_px.x, width_px), cell(canvas_px.y, height_px)};
}

std::string box_text(const GridCell& c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + "),(" + std::to_string(c.x + 1) + "," +
         std::to_string(c.y + 1) + ")";
}

std::string localization_target(int index, const GridCell& c) {
  return "<|object_ref_start|>the " + std::to_string(index) + "th point<|object_ref_end|><|box_start|>" + box_text(c) +
         "<|box_end|>";
}

std::vector<SftRecord> make_localization_records(const std::string& traj_id, std::span<const GeoPoint> prefix,
                                                 const Viewport& vp, const std::string& image_path,
                                                 const PromptLibrary& prompts) {
  if (prefix.size() != kTrajectoryLength - 1) {
    throw Error(ErrorCode::InvalidInput, "localization records need the 12-point prefix");
  }
  std::vector<SftRecord> out;
  out.reserve(prefix.size());
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const int index = static_cast<int>(i) + 1;
    SftRecord r;
    r.image_path = image_path;
    r.prompt_text = prompts.text({PromptType::PointLocalization, index});
    r.target_text = localization_target(index, grid_cell(vp.project(prefix[i]), vp.width(), vp.height()));
    r.task = SftTask::Localization;
    r.meta.traj_id = traj_id;
    r.meta.point_index = index;
    out.push_back(std::move(r));
  }
  return out;
}

ojson candidate_to_json(const CotCandidate& c) {
  ojson j;
  j["traj_id"] = c.traj_id;
  j["vgls_rounds_passed"] = c.vgls_rounds_passed;
  j["cot_text"] = c.cot_text;
  j["confidence"] = c.confidence;
  j["accepted"] = c.accepted;
  j["reject_reason"] = c.reject_reason;
  return j;
}

CotCandidate candidate_from_json(const nlohmann::json& j) {
  try {
    CotCandidate c;
    c.traj_id = j.at("traj_id").get<std::string>();
    c.vgls_rounds_passed = j.at("vgls_rounds_passed").get<int>();
    c.cot_text = j.at("cot_text").get<std::string>();
    c.confidence = j.at("confidence").get<double>();
    c.accepted = j.at("accepted").get<bool>();
    c.reject_reason = j.value("reject_reason", "");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad CoT candidate: ") + e.what());
  }
}

std::optional<double> parse_confidence(std::string_view text) {
  const auto objects = json_objects_in(text);
  for (auto it = objects.rbegin(); it != objects.rend(); ++it) {
    if (!it->contains("confidence")) continue;
    const auto& v = (*it)["confidence"];
    if (!v.is_number()) continue;
    const double c = v.get<double>();
    if (std::isfinite(c) && c >= 0.0 && c <= 1.0) return c;
  }
  return std::nullopt;
}

std::string strip_confidence(std::string_view text) {
  std::string s(text);
  const auto key = s.rfind("\"confidence\"");
  if (key != std::string::npos) {
    const auto open = s.rfind('{', key);
    const auto close = s.find('}', key);
    if (open != std::string::npos && close != std::string::npos) s.erase(open, close - open + 1);
  }
  return trim(s);
}

std::string cot_target(const std::string& cot_text, const GridCell& truth) {
  return "<think>\n" + cot_text + "\n</think>\n<answer>\n" + localization_target(13, truth) + "\n</answer>";
}

std::string store_image(const std::filesystem::path& dir, std::span<const std::uint8_t> png) {
  const std::string name = sha256_hex(png) + ".png";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  if (!std::filesystem::exists(path)) {
    const auto tmp = dir / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
      if (!out) throw Error(ErrorCode::Io, "cannot write image " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }
  return name;
}

Canvas render_trajectory_image(const Viewport& vp, const RoadNetwork& net, std::span<const GeoPoint> points,
                               const RenderStyle& style) {
  Canvas c = render_base_map(vp, net, style);
  draw_trajectory(c, vp, points, style);
  return c;
}

CotResult run_cot_pipeline(std::span<const CotInput> inputs, const RoadNetwork& net, Oracle& oracle,
                           Oracle& generator, const PromptLibrary& prompts, const CotOptions& options) {
  if (options.gate_rounds < 1) throw Error(ErrorCode::InvalidInput, "gate needs at least one round");
  const std::string vgls_prompt = prompts.text({PromptType::Vgls, 0});
  const std::string cot_prompt = prompts.text({PromptType::CotGeneration, 0});
  const std::string predict_prompt = prompts.text({PromptType::PredictNext, 0});

  CotResult result;
  std::size_t accepted = 0;
  for (const CotInput& in : inputs) {
    if (accepted >= options.max_accepted) break;
    CotCandidate cand;
    cand.traj_id = in.traj_id;
    try {
      if (in.points.size() != kTrajectoryLength) {
        throw Error(ErrorCode::InvalidInput, "CoT candidates need 13 points");
      }
      const std::span<const GeoPoint> prefix(in.points.data(), kTrajectoryLength - 1);
      const Viewport vp = viewport_for(prefix, options.viewport);
      const PixelPoint truth = vp.project(in.points.back());

      VglsOptions vo;
      vo.rounds = options.gate_rounds;
      vo.parse_retries = options.parse_retries;
      vo.policy = UnparseablePolicy::Abort;
      vo.seed = options.seed;
      vo.style = options.style;
      vo.prompt_text = vgls_prompt;
      std::optional<Canvas> prefix_image;
      auto prefix_canvas = [&]() -> const Canvas& {
        if (!prefix_image) prefix_image = render_trajectory_image(vp, net, prefix, options.style);
        return *prefix_image;
      };
      VglsSession session(in.traj_id, vp, [&]() { return prefix_canvas(); }, oracle, vo);
      while (!session.done()) {
        session.step();
        if (session.transcript().aborted) {
          cand.reject_reason = "vgls_" + session.transcript().abort_reason;
          break;
        }
        if (!session.region().contains(truth)) {
          cand.reject_reason = "vgls_round_" + std::to_string(cand.vgls_rounds_passed + 1);
          break;
        }
        ++cand.vgls_rounds_passed;
      }

      if (cand.reject_reason.empty()) {
        OracleRequest req;
        req.traj_id = in.traj_id;
        req.purpose = "cot";
        req.prompt_text = cot_prompt;
        req.image_png = [&]() { return encode_png(render_trajectory_image(vp, net, in.points, options.style)); };
        const std::string reply = generator.ask(req);
        const auto conf = parse_confidence(reply);
        cand.cot_text = strip_confidence(reply);
        if (!conf) {
          cand.reject_reason = "confidence_unparseable";
        } else {
          cand.confidence = *conf;
          if (cand.confidence > options.confidence_threshold) {
            cand.accepted = true;
          } else {
            cand.reject_reason = "low_confidence";
          }
        }
      }

      if (cand.accepted) {
        SftRecord rec;
        const std::vector<std::uint8_t> png = encode_png(prefix_canvas());
        rec.image_path = options.image_dir ? options.image_path_prefix + store_image(*options.image_dir, png)
                                           : options.image_path_prefix + sha256_hex(png) + ".png";
        rec.prompt_text = predict_prompt;
        rec.target_text = cot_target(cand.cot_text, grid_cell(truth, vp.width(), vp.height()));
        rec.task = SftTask::Cot;
        rec.meta.traj_id = in.traj_id;
        rec.meta.point_index = static_cast<int>(kTrajectoryLength);
        rec.meta.confidence = cand.confidence;
        result.records.push_back(std::move(rec));
        ++accepted;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::AuthError) throw;
      cand.accepted = false;
      cand.reject_reason = std::string("error_") + std::string(to_string(e.code()));
      ++result.failed;
    } catch (const std::exception&) {
      cand.accepted = false;
      cand.reject_reason = "error_internal";
      ++result.failed;
    }
    result.candidates.push_back(std::move(cand));
  }
  return result;
}

}  // namespace trajoracle
