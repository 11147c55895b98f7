#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "synth.hpp"
#include "trajoracle/dataprep.hpp"
#include "trajoracle/error.hpp"
#include "trajoracle/rewards.hpp"
#include "trajoracle/vgls.hpp"

using namespace trajoracle;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("traj" + std::to_string(i));
  return out;
}

class ScriptedGenerator final : public Oracle {
 public:
  explicit ScriptedGenerator(std::string reply) : reply_(std::move(reply)) {}
  std::string ask(const OracleRequest& req) override {
    ++calls;
    CHECK(req.purpose == "cot");
    return reply_;
  }
  int calls = 0;

 private:
  std::string reply_;
};

/// Answers from the truth except in `wrong_round`, where it picks the other half.
class GateOracle final : public Oracle {
 public:
  GateOracle(std::map<std::string, PixelPoint> truths, int wrong_round)
      : truths_(std::move(truths)), wrong_round_(wrong_round) {}
  std::string ask(const OracleRequest& req) override {
    ++calls;
    const auto& q = *req.vgls;
    const bool blue = half_containing(q.split, truths_.at(req.traj_id)) == q.split.blue_half;
    const bool answer_blue = req.round == wrong_round_ ? !blue : blue;
    return answer_blue ? R"({"ANS": 0})" : R"({"ANS": 1})";
  }
  int calls = 0;

 private:
  std::map<std::string, PixelPoint> truths_;
  int wrong_round_;
};

struct Fixture {
  synth::City city;
  RoadNetwork net;
  std::vector<CotInput> inputs;
  std::map<std::string, PixelPoint> truths;

  /// `on_canvas` keeps only walks whose 13th point falls inside the prefix viewport.
  explicit Fixture(int n, bool on_canvas = true) {
    city.half_blocks = 8;
    net = load_roads(city.geojson());
    std::mt19937_64 rng(21);
    while (static_cast<int>(inputs.size()) < n) {
      const Trajectory t = resample_uniform(synth::walk(rng, city));
      CotInput in{"c" + std::to_string(inputs.size()), t.points};
      const Viewport vp = viewport_for(std::span<const GeoPoint>(in.points.data(), 12));
      const PixelPoint p = vp.project(in.points.back());
      const bool inside = PixelRect{0, 0, vp.width(), vp.height()}.contains(p);
      if (inside != on_canvas) continue;
      truths[in.traj_id] = p;
      inputs.push_back(std::move(in));
    }
  }
};

}  // namespace

TEST_CASE("split sizes and determinism") {
  const auto all = ids(1500);
  const auto s = make_split(all, 7);
  CHECK(s.train.size() == 1050);
  CHECK(s.val.size() == 150);
  CHECK(s.test.size() == 300);
  std::set<std::string> seen(s.train.begin(), s.train.end());
  seen.insert(s.val.begin(), s.val.end());
  seen.insert(s.test.begin(), s.test.end());
  CHECK(seen.size() == 1500);

  const auto again = make_split(all, 7);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(make_split(all, 8).train != s.train);

  const auto small = make_split(ids(15), 1);
  CHECK(small.train.size() == 11);  // round(10.5)
  CHECK(small.val.size() == 2);     // round(1.5)
  CHECK(small.test.size() == 2);

  CHECK_THROWS_AS(make_split(ids(9), 1), Error);
  auto dup = ids(12);
  dup[5] = dup[6];
  CHECK_THROWS_AS(make_split(dup, 1), Error);

  const auto back = split_from_json(split_to_json(s));
  CHECK(back.train == s.train);
  CHECK(back.val == s.val);
  CHECK(back.test == s.test);
  CHECK(back.seed == 7);
}

TEST_CASE("grid cells and box text") {
  const GridCell c = grid_cell({199.3, 730.4}, 1000, 1000);
  CHECK(c.x == 199);
  CHECK(c.y == 730);
  CHECK(box_text(c) == "(199,730),(200,731)");
  CHECK(localization_target(4, c) ==
        "<|object_ref_start|>the 4th point<|object_ref_end|><|box_start|>(199,730),(200,731)<|box_end|>");
  CHECK(grid_cell({1000.0, -3.0}, 1000, 1000).x == 999);
  CHECK(grid_cell({1000.0, -3.0}, 1000, 1000).y == 0);
  CHECK(grid_cell({250.0, 250.0}, 500, 500).x == 500);
}

TEST_CASE("localization records") {
  synth::City city;
  std::mt19937_64 rng(4);
  const Trajectory t = resample_uniform(synth::walk(rng, city));
  const std::span<const GeoPoint> prefix(t.points.data(), 12);
  const Viewport vp = viewport_for(prefix);
  const PromptLibrary prompts;
  const auto recs = make_localization_records("a1", prefix, vp, "images/a1.png", prompts);
  REQUIRE(recs.size() == 12);
  for (int i = 0; i < 12; ++i) {
    CAPTURE(i);
    const auto& r = recs[i];
    CHECK(r.task == SftTask::Localization);
    CHECK(r.meta.point_index == i + 1);
    CHECK(r.image_path == "images/a1.png");
    CHECK(r.prompt_text == prompts.text({PromptType::PointLocalization, i + 1}));
    // The box reads back to within a pixel of the projected point.
    const auto parsed = parse_response("<answer>" + r.target_text + "</answer>");
    REQUIRE(parsed.boxed_point);
    const PixelPoint want = vp.project(prefix[i]);
    CHECK(std::abs(parsed.boxed_point->x - want.x) <= 1.0);
    CHECK(std::abs(parsed.boxed_point->y - want.y) <= 1.0);
    CHECK(record_to_json(record_from_json(record_to_json(r))) == record_to_json(r));
  }
  CHECK_THROWS_AS(make_localization_records("a1", t.points, vp, "x.png", prompts), Error);
}

TEST_CASE("confidence parsing") {
  CHECK(parse_confidence(R"(think {"confidence": 0.9})") == 0.9);
  CHECK(parse_confidence(R"({"confidence": 0.2} later {"confidence": 0.8})") == 0.8);
  CHECK(parse_confidence(R"({"confidence": 0.4} then {"confidence": 7})") == 0.4);
  CHECK_FALSE(parse_confidence("quite sure"));
  CHECK_FALSE(parse_confidence(R"({"confidence": "high"})"));
  CHECK(strip_confidence("  step one\nstep two\n{\"confidence\": 0.9}\n") == "step one\nstep two");
  CHECK(cot_target("why", {3, 4}) == "<think>\nwhy\n</think>\n<answer>\n"
                                     "<|object_ref_start|>the 13th point<|object_ref_end|>"
                                     "<|box_start|>(3,4),(4,5)<|box_end|>\n</answer>");
}

TEST_CASE("gate passes, generator confident") {
  Fixture f(4);
  GateOracle gate(f.truths, 0);
  ScriptedGenerator gen("1. heading west\n2. staying on the avenue\n{\"confidence\": 0.9}");
  const auto dir = synth::scratch("cot_images");
  CotOptions opts;
  opts.image_dir = dir;
  const auto res = run_cot_pipeline(f.inputs, f.net, gate, gen, PromptLibrary(), opts);
  REQUIRE(res.candidates.size() == 4);
  CHECK(gen.calls == 4);
  CHECK(gate.calls == 20);
  REQUIRE(res.records.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& c = res.candidates[i];
    CHECK(c.accepted);
    CHECK(c.vgls_rounds_passed == 5);
    CHECK(c.confidence == 0.9);
    CHECK(c.reject_reason.empty());
    const auto& r = res.records[i];
    CHECK(r.task == SftTask::Cot);
    CHECK(r.meta.point_index == 13);
    CHECK(r.meta.confidence == 0.9);
    CHECK(r.prompt_text == PromptLibrary().text({PromptType::PredictNext}));
    CHECK(r.target_text.rfind("<think>\n1. heading west\n2. staying on the avenue\n</think>", 0) == 0);
    REQUIRE(r.image_path.rfind("images/", 0) == 0);
    CHECK(std::filesystem::exists(dir / r.image_path.substr(7)));
    const auto parsed = parse_response(r.target_text);
    REQUIRE(parsed.boxed_point);
    CHECK(std::abs(parsed.boxed_point->x - f.truths[c.traj_id].x) <= 1.0);
    CHECK(candidate_from_json(candidate_to_json(c)).traj_id == c.traj_id);
  }
}

TEST_CASE("gate failure skips the generator") {
  Fixture f(3);
  GateOracle gate(f.truths, 3);
  ScriptedGenerator gen(R"({"confidence": 0.99})");
  const auto res = run_cot_pipeline(f.inputs, f.net, gate, gen, PromptLibrary());
  CHECK(gen.calls == 0);
  CHECK(res.records.empty());
  for (const auto& c : res.candidates) {
    CHECK_FALSE(c.accepted);
    CHECK(c.vgls_rounds_passed == 2);
    CHECK(c.reject_reason == "vgls_round_3");
  }
}

TEST_CASE("a next point off the canvas fails the first round") {
  Fixture f(2, false);
  GateOracle gate(f.truths, 0);
  ScriptedGenerator gen(R"({"confidence": 0.9})");
  const auto res = run_cot_pipeline(f.inputs, f.net, gate, gen, PromptLibrary());
  for (const auto& c : res.candidates) CHECK(c.reject_reason == "vgls_round_1");
  CHECK(gen.calls == 0);
}

TEST_CASE("confidence must exceed the threshold") {
  Fixture f(2);
  GateOracle gate(f.truths, 0);
  ScriptedGenerator at(R"(fine {"confidence": 0.75})");
  auto res = run_cot_pipeline(f.inputs, f.net, gate, at, PromptLibrary());
  CHECK(res.records.empty());
  CHECK(res.candidates[0].reject_reason == "low_confidence");
  ScriptedGenerator none("no score");
  res = run_cot_pipeline(f.inputs, f.net, gate, none, PromptLibrary());
  CHECK(res.candidates[0].reject_reason == "confidence_unparseable");
}

TEST_CASE("unparseable gate answers reject the candidate") {
  Fixture f(1);
  ScriptedGenerator gen(R"({"confidence": 0.9})");
  class Junk final : public Oracle {
   public:
    std::string ask(const OracleRequest&) override { return "hmm"; }
  } vlm;
  const auto res = run_cot_pipeline(f.inputs, f.net, vlm, gen, PromptLibrary());
  CHECK(res.candidates[0].reject_reason == "vgls_OracleUnparseable");
  CHECK(gen.calls == 0);
}

TEST_CASE("the accepted cap stops the run") {
  Fixture f(6);
  GateOracle gate(f.truths, 0);
  ScriptedGenerator gen(R"({"confidence": 0.9})");
  CotOptions opts;
  opts.max_accepted = 2;
  const auto res = run_cot_pipeline(f.inputs, f.net, gate, gen, PromptLibrary(), opts);
  CHECK(res.records.size() == 2);
  CHECK(res.candidates.size() == 2);
  CHECK(gen.calls == 2);
}

TEST_CASE("bad candidates are counted and skipped") {
  Fixture f(2);
  f.inputs[0].points.pop_back();
  GateOracle gate(f.truths, 0);
  ScriptedGenerator gen(R"({"confidence": 0.9})");
  const auto res = run_cot_pipeline(f.inputs, f.net, gate, gen, PromptLibrary());
  CHECK(res.failed == 1);
  CHECK(res.candidates[0].reject_reason == "error_InvalidInput");
  CHECK(res.candidates[1].accepted);
}

TEST_CASE("content-addressed image store") {
  const auto dir = synth::scratch("store");
  const auto png = encode_png(Canvas(4, 4));
  const std::string a = store_image(dir, png);
  const std::string b = store_image(dir, png);
  CHECK(a == b);
  CHECK(a.size() == 64 + 4);
  CHECK(synth::read(dir / a).size() == png.size());
}
