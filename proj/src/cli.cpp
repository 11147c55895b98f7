#include "trajoracle/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "trajoracle/dataprep.hpp"
#include "trajoracle/error.hpp"
#include "trajoracle/eval.hpp"
#include "trajoracle/grpo.hpp"
#include "trajoracle/hash.hpp"
#include "trajoracle/oracle_client.hpp"
#include "trajoracle/raster.hpp"
#include "trajoracle/rewards.hpp"
#include "trajoracle/roadnet.hpp"
#include "trajoracle/vgls.hpp"

namespace trajoracle {
namespace {

using ojson = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& what, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
  return v;
}

bool valid_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

int exit_for(ErrorCode c) {
  return (c == ErrorCode::AuthError || c == ErrorCode::OracleTransport) ? kExitEndpoint : kExitInput;
}

void print_error(std::ostream& err, ErrorCode code, const std::string& message) {
  ojson j;
  j["error"] = std::string(to_string(code));
  j["message"] = message;
  err << j.dump() << "\n";
}

std::string hash_file(const std::string& path) { return sha256_hex(read_file(path)); }

std::string jsonl(const std::vector<ojson>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(n) + ": not a JSON object");
    }
    out.push_back(std::move(j));
  }
  return out;
}

template <class F>
void parallel_for(std::size_t n, int jobs, const std::atomic<bool>& stop, F&& f) {
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      f(i);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

struct Options {
  std::string config;
  std::string out;
  int jobs = 1;
  std::uint64_t seed = 0;

  std::string raw;
  double dt = kSampleIntervalS;

  std::string trajectories;
  std::string roads;
  std::string split_file;
  std::string split;
  std::size_t limit = 0;
  int canvas = 1000;
  double margin = 1.5;
  double min_side = 500.0;
  int points = 12;

  std::string oracle = "mock:perfect";
  int rounds = 10;
  int retries = 2;
  std::string policy = "coin-flip";
  bool save_images = false;
  std::string missing = "exclude";

  std::string base_url;
  std::string model;
  double timeout = 60.0;
  int max_retries = 2;
  double temperature = 0.0;
  int max_tokens = 1024;
  int max_concurrent = 4;
  double rps = 1.0;

  std::string responses;
  double w_dis = 1.0;
  double w_road = 1.0;
  double w_format = 1.0;
  double w_step = 1.0;

  std::string scored;
  std::size_t group_size = 0;
  bool lenient = false;
  double beta = 0.0;

  std::string generator = "mock:scripted";
  std::string generator_url;
  std::string generator_model;
  std::size_t max_cot = 300;
  int gate_rounds = 5;
  double threshold = 0.75;

  std::string predictions;
  std::string format = "table";
  std::string label = "trajoracle";
};

ViewportOptions viewport_options(const Options& o) {
  ViewportOptions v;
  v.canvas_px = o.canvas;
  v.margin_factor = o.margin;
  v.min_side_m = o.min_side;
  if (v.canvas_px < 16 || !(v.margin_factor >= 1.0) || !(v.min_side_m > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "viewport settings out of range");
  }
  return v;
}

std::span<const GeoPoint> prefix_of(const StoredTrajectory& t) {
  if (t.traj.points.size() != kTrajectoryLength) {
    throw Error(ErrorCode::InvalidInput, "trajectory " + t.traj_id + " does not have 13 points");
  }
  return {t.traj.points.data(), kTrajectoryLength - 1};
}

MissingPolicy missing_policy(const std::string& s) {
  if (s == "exclude") return MissingPolicy::Exclude;
  if (s == "penalize") return MissingPolicy::Penalize;
  throw Error(ErrorCode::InvalidInput, "missing policy must be exclude or penalize");
}

/// Options as resolved after config merging, minus those that only choose
/// where results go or how fast they are produced.
ojson resolved_config(const CLI::App& sub) {
  ojson cfg = ojson::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name.empty() || name == "--help" || name == "--config" || name == "--out" || name == "--jobs") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    cfg[name.substr(2)] = value;
  }
  return cfg;
}

ojson manifest(const std::string& command, const ojson& config, const ojson& inputs, ojson outputs) {
  ojson m;
  m["tool"] = "trajoracle";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config;
  m["config_sha256"] = sha256_hex(config.dump());
  m["inputs"] = inputs;
  m["outputs"] = std::move(outputs);
  return m;
}

void write_manifest(const Options& o, const ojson& m) {
  write_file(std::filesystem::path(o.out) / "manifest.json", m.dump(2) + "\n");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidInput, std::string(flag) + " is required");
}

std::vector<StoredTrajectory> select_trajectories(const Options& o, const std::string& default_split, ojson& inputs) {
  require(o.trajectories, "--trajectories");
  auto all = trajectories_from_jsonl(read_file(o.trajectories));
  inputs["trajectories"] = hash_file(o.trajectories);
  const std::string which = o.split.empty() ? (o.split_file.empty() ? "all" : default_split) : o.split;
  std::vector<StoredTrajectory> chosen;
  if (which == "all") {
    chosen = std::move(all);
  } else {
    if (which != "train" && which != "val" && which != "test") {
      throw Error(ErrorCode::InvalidInput, "--split must be all, train, val or test");
    }
    require(o.split_file, "--split-file");
    const auto j = nlohmann::json::parse(read_file(o.split_file), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "split file is not JSON");
    inputs["splits"] = hash_file(o.split_file);
    const DatasetSplit split = split_from_json(j);
    const auto& ids = which == "train" ? split.train : which == "val" ? split.val : split.test;
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < all.size(); ++i) pos[all[i].traj_id] = i;
    for (const auto& id : ids) {
      auto it = pos.find(id);
      if (it == pos.end()) throw Error(ErrorCode::InvalidInput, "split names unknown trajectory " + id);
      chosen.push_back(all[it->second]);
    }
  }
  if (o.limit > 0 && chosen.size() > o.limit) chosen.resize(o.limit);
  return chosen;
}

RoadNetwork load_network(const Options& o, ojson& inputs) {
  require(o.roads, "--roads");
  const std::string text = read_file(o.roads);
  inputs["roads"] = sha256_hex(text);
  return load_roads(text);
}

EndpointConfig endpoint(const Options& o, const std::string& url, const std::string& model) {
  EndpointConfig c;
  c.base_url = url;
  c.model_name = model;
  c.api_key = EndpointConfig::api_key_from_env();
  c.timeout_seconds = o.timeout;
  c.max_retries = o.max_retries;
  c.temperature = o.temperature;
  c.max_tokens = o.max_tokens;
  c.max_concurrent = o.max_concurrent;
  c.requests_per_second = o.rps;
  if (c.base_url.empty()) throw Error(ErrorCode::InvalidInput, "--base-url is required for http oracles");
  if (c.model_name.empty()) throw Error(ErrorCode::InvalidInput, "--model is required for http oracles");
  c.validate();
  return c;
}

struct OracleSpec {
  bool http = false;
  MockKind kind = MockKind::Perfect;
  double p = 1.0;
};

OracleSpec parse_oracle_spec(const std::string& s) {
  OracleSpec spec;
  if (s == "http") {
    spec.http = true;
  } else if (s == "mock:perfect") {
    spec.kind = MockKind::Perfect;
  } else if (s == "mock:random") {
    spec.kind = MockKind::Random;
  } else if (s.rfind("mock:noisy:", 0) == 0) {
    spec.kind = MockKind::Noisy;
    std::size_t used = 0;
    const std::string num = s.substr(11);
    try {
      spec.p = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != num.size() || !(spec.p >= 0.0 && spec.p <= 1.0)) {
      throw Error(ErrorCode::InvalidInput, "mock:noisy:p needs p in [0,1]");
    }
  } else {
    throw Error(ErrorCode::InvalidInput, "--oracle must be mock:perfect, mock:random, mock:noisy:p or http");
  }
  return spec;
}

// Routes each request to a mock built for that trajectory's truth.
class MockRouter final : public Oracle {
 public:
  MockRouter(OracleSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {}
  void add(const std::string& traj_id, PixelPoint truth) {
    mocks_[traj_id] = make_mock_oracle(spec_.kind, truth, spec_.p, seed_);
  }
  std::string ask(const OracleRequest& req) override {
    auto it = mocks_.find(req.traj_id);
    if (it == mocks_.end()) throw Error(ErrorCode::InvalidInput, "no mock registered for " + req.traj_id);
    return it->second->ask(req);
  }

 private:
  OracleSpec spec_;
  std::uint64_t seed_;
  std::map<std::string, std::unique_ptr<Oracle>> mocks_;
};

// Numbered reasoning and a confidence fixed by the trajectory id, or a
// constant confidence for every request.
class ScriptedGenerator final : public Oracle {
 public:
  explicit ScriptedGenerator(std::optional<double> constant) : constant_(constant) {}
  std::string ask(const OracleRequest& req) override {
    const double c = constant_ ? *constant_ : static_cast<double>(fnv1a64(req.traj_id) % 101) / 100.0;
    std::ostringstream s;
    s << "1. The trajectory starts at point 1 and follows the gray roads.\n"
      << "2. The last arrows keep a steady heading and spacing.\n"
      << "3. Continuing along the current road for one more interval gives the next position.\n"
      << "{\"confidence\": " << c << "}";
    return s.str();
  }

 private:
  std::optional<double> constant_;
};

std::unique_ptr<Oracle> make_generator(const Options& o, std::unique_ptr<ChatClient>& client) {
  if (o.generator == "mock:scripted") return std::make_unique<ScriptedGenerator>(std::nullopt);
  if (o.generator.rfind("mock:const:", 0) == 0) {
    const std::string num = o.generator.substr(11);
    std::size_t used = 0;
    double c = -1.0;
    try {
      c = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != num.size() || !(c >= 0.0 && c <= 1.0)) {
      throw Error(ErrorCode::InvalidInput, "mock:const:c needs c in [0,1]");
    }
    return std::make_unique<ScriptedGenerator>(c);
  }
  if (o.generator == "http") {
    client = std::make_unique<ChatClient>(endpoint(o, o.generator_url.empty() ? o.base_url : o.generator_url,
                                                   o.generator_model.empty() ? o.model : o.generator_model));
    return std::make_unique<HttpOracle>(*client);
  }
  throw Error(ErrorCode::InvalidInput, "--generator must be mock:scripted, mock:const:c or http");
}

// ---------------------------------------------------------------- commands

int cmd_preprocess(const Options& o, const ojson& config, std::ostream& out, std::ostream& err) {
  require(o.raw, "--raw");
  require(o.out, "--out");
  if (!(o.dt > 0.0)) throw Error(ErrorCode::InvalidInput, "--dt must be positive");
  const std::string raw_text = read_file(o.raw);
  const auto raws = parse_raw(raw_text);

  std::vector<StoredTrajectory> kept;
  std::map<std::string, std::size_t> reasons;
  ojson rejected = ojson::array();
  for (const auto& r : raws) {
    std::string reason;
    try {
      if (!valid_id(r.traj_id)) throw Error(ErrorCode::InvalidInput, "trajectory id has unsupported characters");
      for (const auto& p : r.points) {
        if (!is_valid(p.point)) throw Error(ErrorCode::InvalidInput, "coordinate out of range");
      }
      kept.push_back({r.traj_id, r.city, resample_uniform(r.points, o.dt, kTrajectoryLength)});
    } catch (const Error& e) {
      reason = std::string(to_string(e.code()));
      ++reasons[reason];
      rejected.push_back({{"traj_id", r.traj_id}, {"reason", reason}});
    }
  }

  std::filesystem::create_directories(o.out);
  write_file(std::filesystem::path(o.out) / "trajectories.jsonl", trajectories_to_jsonl(kept));

  ojson outputs;
  outputs["raw_trajectories"] = raws.size();
  outputs["kept"] = kept.size();
  outputs["rejected"] = raws.size() - kept.size();
  outputs["rejection_reasons"] = reasons;
  outputs["rejected_ids"] = rejected;

  std::optional<Error> split_error;
  std::vector<std::string> ids;
  for (const auto& t : kept) ids.push_back(t.traj_id);
  try {
    const DatasetSplit split = make_split(ids, o.seed);
    write_file(std::filesystem::path(o.out) / "splits.json", split_to_json(split).dump(2) + "\n");
    outputs["split"] = {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}};
  } catch (const Error& e) {
    split_error = e;
    outputs["split"] = nullptr;
  }
  ojson inputs;
  inputs["raw"] = sha256_hex(raw_text);
  write_manifest(o, manifest("preprocess", config, inputs, outputs));

  out << "preprocess: " << raws.size() << " raw, " << kept.size() << " kept, " << raws.size() - kept.size()
      << " rejected\n";
  if (split_error) {
    print_error(err, split_error->code(), split_error->what());
    return kExitInput;
  }
  return kept.size() == raws.size() ? kExitOk : kExitPartial;
}

int cmd_render(const Options& o, const ojson& config, std::ostream& out, std::ostream& err) {
  require(o.out, "--out");
  if (o.points != 12 && o.points != 13) throw Error(ErrorCode::InvalidInput, "--points must be 12 or 13");
  ojson inputs;
  const auto trajs = select_trajectories(o, "test", inputs);
  const RoadNetwork net = load_network(o, inputs);
  const ViewportOptions vopt = viewport_options(o);
  const auto dir = std::filesystem::path(o.out) / "images";
  std::filesystem::create_directories(dir);

  std::vector<std::string> failures(trajs.size());
  std::atomic<bool> stop{false};
  parallel_for(trajs.size(), o.jobs, stop, [&](std::size_t i) {
    const auto& t = trajs[i];
    try {
      const Viewport vp = viewport_for(prefix_of(t), vopt);
      const std::span<const GeoPoint> pts(t.traj.points.data(), static_cast<std::size_t>(o.points));
      const auto png = encode_png(render_trajectory_image(vp, net, pts));
      write_file(dir / (t.traj_id + ".png"),
                 std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });

  ojson failed = ojson::array();
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (failures[i].empty()) continue;
    err << "skip " << trajs[i].traj_id << ": " << failures[i] << "\n";
    failed.push_back({{"traj_id", trajs[i].traj_id}, {"error", failures[i]}});
  }
  ojson outputs;
  outputs["images"] = trajs.size() - failed.size();
  outputs["failed"] = failed;
  write_manifest(o, manifest("render", config, inputs, outputs));
  out << "render: " << trajs.size() - failed.size() << " images, " << failed.size() << " failed\n";
  return failed.empty() ? kExitOk : kExitPartial;
}

int cmd_vgls(const Options& o, const ojson& config, std::ostream& out, std::ostream& err) {
  require(o.out, "--out");
  ojson inputs;
  const auto trajs = select_trajectories(o, "test", inputs);
  const RoadNetwork net = load_network(o, inputs);
  const ViewportOptions vopt = viewport_options(o);
  const OracleSpec spec = parse_oracle_spec(o.oracle);
  const MissingPolicy mpolicy = missing_policy(o.missing);
  if (o.policy != "coin-flip" && o.policy != "abort") {
    throw Error(ErrorCode::InvalidInput, "--policy must be coin-flip or abort");
  }
  const PromptLibrary prompts;
  const std::string prompt = prompts.text({PromptType::Vgls, 0});

  std::unique_ptr<ChatClient> client;
  std::unique_ptr<HttpOracle> http;
  if (spec.http) {
    client = std::make_unique<ChatClient>(endpoint(o, o.base_url, o.model));
    http = std::make_unique<HttpOracle>(*client);
  }

  const auto root = std::filesystem::path(o.out);
  std::filesystem::create_directories(root / "transcripts");
  std::filesystem::create_directories(root / "journal");

  std::vector<std::optional<PredictionRecord>> preds(trajs.size());
  std::vector<std::string> failures(trajs.size());
  std::vector<bool> aborted(trajs.size(), false);
  std::atomic<bool> stop{false};
  std::mutex auth_mu;
  std::optional<std::string> auth_failure;

  parallel_for(trajs.size(), o.jobs, stop, [&](std::size_t i) {
    const auto& t = trajs[i];
    try {
      const auto prefix = prefix_of(t);
      const Viewport vp = viewport_for(prefix, vopt);
      const PixelPoint truth = vp.project(t.traj.points.back());
      std::unique_ptr<Oracle> mock;
      if (!spec.http) mock = make_mock_oracle(spec.kind, truth, spec.p, o.seed);
      Oracle& inner = spec.http ? static_cast<Oracle&>(*http) : *mock;
      Journal journal(root / "journal" / (t.traj_id + ".jsonl"));
      JournaledOracle oracle(inner, journal);

      VglsOptions vo;
      vo.rounds = o.rounds;
      vo.parse_retries = o.retries;
      vo.policy = o.policy == "abort" ? UnparseablePolicy::Abort : UnparseablePolicy::CoinFlip;
      vo.seed = o.seed;
      vo.prompt_text = prompt;
      if (o.save_images) vo.image_dir = (root / "images").string();
      const VglsTranscript tr = run_vgls(t.traj_id, prefix, vp, net, oracle, vo);
      write_file(root / "transcripts" / (t.traj_id + ".jsonl"), transcript_to_jsonl(tr));

      std::optional<GeoPoint> predicted;
      if (!(tr.aborted && tr.abort_reason == "OracleUnparseable")) predicted = tr.final_center_geo;
      aborted[i] = tr.aborted && tr.abort_reason == "OracleUnparseable";
      const SegmentIndex idx = build_index(net, vp);
      preds[i] = make_prediction_record(t.traj_id, t.city, predicted, t.traj.points.back(), vp, &idx);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::AuthError) {
        std::lock_guard lock(auth_mu);
        auth_failure = e.what();
        stop.store(true);
      }
      failures[i] = e.what();
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });

  if (auth_failure) {
    print_error(err, ErrorCode::AuthError, *auth_failure);
    return kExitEndpoint;
  }

  std::vector<PredictionRecord> records;
  std::vector<ojson> lines;
  ojson failed = ojson::array();
  std::size_t n_aborted = 0;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (!failures[i].empty()) {
      err << "skip " << trajs[i].traj_id << ": " << failures[i] << "\n";
      failed.push_back({{"traj_id", trajs[i].traj_id}, {"error", failures[i]}});
      continue;
    }
    if (aborted[i]) ++n_aborted;
    records.push_back(*preds[i]);
    lines.push_back(prediction_to_json(*preds[i]));
  }
  write_file(root / "predictions.jsonl", jsonl(lines));

  ojson outputs;
  outputs["trajectories"] = trajs.size();
  outputs["completed"] = records.size();
  outputs["unparseable_aborts"] = n_aborted;
  outputs["failed"] = failed;
  try {
    const MetricsReport rep = build_report(records, mpolicy, o.label);
    write_file(root / "report.txt", write_report(rep, ReportFormat::Table));
    write_file(root / "report.json", write_report(rep, ReportFormat::Json));
    outputs["mae_m"] = rep.mae_m;
    outputs["rmse_m"] = rep.rmse_m;
    out << write_report(rep, ReportFormat::Table);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyBatch) throw;
    outputs["mae_m"] = nullptr;
    outputs["rmse_m"] = nullptr;
  }
  write_manifest(o, manifest("vgls", config, inputs, outputs));
  out << "vgls: " << records.size() << " completed, " << failed.size() << " failed\n";
  return failed.empty() && n_aborted == 0 ? kExitOk : kExitPartial;
}

int cmd_score(const Options& o, const ojson& config, std::ostream& out, std::ostream& err) {
  require(o.out, "--out");
  require(o.responses, "--responses");
  ojson inputs;
  const auto trajs = select_trajectories(o, "test", inputs);
  const RoadNetwork net = load_network(o, inputs);
  const ViewportOptions vopt = viewport_options(o);
  const auto responses = read_jsonl(o.responses);
  inputs["responses"] = hash_file(o.responses);
  const RewardWeights w{o.w_dis, o.w_road, o.w_format, o.w_step};

  std::unordered_map<std::string, const StoredTrajectory*> by_id;
  for (const auto& t : trajs) by_id[t.traj_id] = &t;

  std::vector<ojson> lines;
  ojson failed = ojson::array();
  for (const auto& r : responses) {
    const std::string id = r.value("traj_id", "");
    try {
      if (!r.contains("response") || !r["response"].is_string()) {
        throw Error(ErrorCode::ParseError, "response line needs a string 'response'");
      }
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(ErrorCode::InvalidInput, "unknown trajectory " + id);
      const Viewport vp = viewport_for(prefix_of(*it->second), vopt);
      const SegmentIndex idx = build_index(net, vp);
      const PixelPoint truth = vp.project(it->second->traj.points.back());
      const RewardVector v = score_response(r["response"].get<std::string>(), truth, idx, w);
      ojson line;
      line["traj_id"] = id;
      line["r_dis"] = v.r_dis;
      line["r_road"] = v.r_road;
      line["r_format"] = v.r_format;
      line["r_step"] = v.r_step;
      line["total"] = v.total;
      lines.push_back(std::move(line));
    } catch (const Error& e) {
      err << "skip " << id << ": " << e.what() << "\n";
      failed.push_back({{"traj_id", id}, {"error", e.what()}});
    }
  }
  write_file(std::filesystem::path(o.out) / "rewards.jsonl", jsonl(lines));
  ojson outputs;
  outputs["scored"] = lines.size();
  outputs["failed"] = failed;
  write_manifest(o, manifest("score", config, inputs, outputs));
  out << "score: " << lines.size() << " scored, " << failed.size() << " failed\n";
  return failed.empty() ? kExitOk : kExitPartial;
}

int cmd_grpo(const Options& o, const ojson& config, std::ostream& out, std::ostream&) {
  require(o.out, "--out");
  require(o.scored, "--scored");
  if (!o.lenient && o.group_size == 0) throw Error(ErrorCode::InvalidInput, "--group-size is required unless --lenient");
  std::vector<ScoredRecord> recs;
  for (const auto& j : read_jsonl(o.scored)) {
    try {
      ScoredRecord r;
      r.query_id = j.at("query_id").get<std::string>();
      r.reward = j.at("reward").get<double>();
      r.policy_logps = j.value("policy_logps", std::vector<double>{});
      r.ref_logps = j.value("ref_logps", std::vector<double>{});
      recs.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("bad scored record: ") + e.what());
    }
  }
  ojson inputs;
  inputs["scored"] = hash_file(o.scored);
  const auto groups = build_groups(recs, o.group_size, !o.lenient);
  std::vector<ojson> lines;
  for (const auto& g : groups) {
    ojson line;
    line["query_id"] = g.query_id;
    const bool has_logps = std::all_of(g.responses.begin(), g.responses.end(),
                                       [](const Rollout& r) { return !r.policy_logps.empty(); });
    if (has_logps) {
      const GrpoOutput res = grpo_loss(g, o.beta);
      line["advantages"] = res.advantages;
      line["kl"] = res.kl;
      line["loss"] = res.loss;
    } else {
      std::vector<double> rewards;
      for (const auto& r : g.responses) rewards.push_back(r.reward);
      line["advantages"] = group_advantages(rewards);
      line["kl"] = nullptr;
      line["loss"] = nullptr;
    }
    line["beta"] = o.beta;
    lines.push_back(std::move(line));
  }
  write_file(std::filesystem::path(o.out) / "grpo.jsonl", jsonl(lines));
  ojson outputs;
  outputs["records"] = recs.size();
  outputs["groups"] = groups.size();
  write_manifest(o, manifest("grpo", config, inputs, outputs));
  out << "grpo: " << groups.size() << " groups\n";
  return kExitOk;
}

int cmd_make_sft(const Options& o, const ojson& config, std::ostream& out, std::ostream& err) {
  require(o.out, "--out");
  ojson inputs;
  const auto trajs = select_trajectories(o, "train", inputs);
  const RoadNetwork net = load_network(o, inputs);
  const ViewportOptions vopt = viewport_options(o);
  const OracleSpec spec = parse_oracle_spec(o.oracle);
  const PromptLibrary prompts;
  const auto root = std::filesystem::path(o.out);
  const auto image_dir = root / "images";
  std::filesystem::create_directories(image_dir);

  // D1: point localization.
  std::vector<std::vector<SftRecord>> d1(trajs.size());
  std::vector<std::string> failures(trajs.size());
  std::atomic<bool> stop{false};
  parallel_for(trajs.size(), o.jobs, stop, [&](std::size_t i) {
    try {
      const auto prefix = prefix_of(trajs[i]);
      const Viewport vp = viewport_for(prefix, vopt);
      const auto png = encode_png(render_trajectory_image(vp, net, prefix));
      const std::string name = store_image(image_dir, png);
      d1[i] = make_localization_records(trajs[i].traj_id, prefix, vp, "images/" + name, prompts);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::vector<ojson> d1_lines;
  ojson failed = ojson::array();
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (!failures[i].empty()) {
      err << "skip " << trajs[i].traj_id << ": " << failures[i] << "\n";
      failed.push_back({{"traj_id", trajs[i].traj_id}, {"error", failures[i]}});
    }
    for (const auto& r : d1[i]) d1_lines.push_back(record_to_json(r));
  }

  // D2: gated, confidence-filtered CoT.
  std::unique_ptr<ChatClient> oracle_client;
  std::unique_ptr<Oracle> base_oracle;
  if (spec.http) {
    oracle_client = std::make_unique<ChatClient>(endpoint(o, o.base_url, o.model));
    base_oracle = std::make_unique<HttpOracle>(*oracle_client);
  } else {
    auto router = std::make_unique<MockRouter>(spec, o.seed);
    for (const auto& t : trajs) {
      if (t.traj.points.size() != kTrajectoryLength) continue;
      const Viewport vp = viewport_for(prefix_of(t), vopt);
      router->add(t.traj_id, vp.project(t.traj.points.back()));
    }
    base_oracle = std::move(router);
  }
  std::unique_ptr<ChatClient> gen_client;
  auto generator = make_generator(o, gen_client);
  Journal journal(root / "journal.jsonl");
  JournaledOracle jo(*base_oracle, journal);
  JournaledOracle jg(*generator, journal);

  std::vector<CotInput> cot_inputs;
  for (const auto& t : trajs) cot_inputs.push_back({t.traj_id, t.traj.points});
  CotOptions co;
  co.max_accepted = o.max_cot;
  co.gate_rounds = o.gate_rounds;
  co.confidence_threshold = o.threshold;
  co.parse_retries = o.retries;
  co.seed = o.seed;
  co.viewport = vopt;
  co.image_dir = image_dir;
  co.image_path_prefix = "images/";
  CotResult cot;
  try {
    cot = run_cot_pipeline(cot_inputs, net, jo, jg, prompts, co);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AuthError) throw;
    print_error(err, e.code(), e.what());
    return kExitEndpoint;
  }

  std::vector<ojson> d2_lines;
  std::vector<ojson> cand_lines;
  std::map<std::string, std::size_t> reasons;
  std::size_t n_accepted = 0;
  for (const auto& c : cot.candidates) {
    cand_lines.push_back(candidate_to_json(c));
    if (c.accepted) {
      ++n_accepted;
    } else {
      ++reasons[c.reject_reason];
    }
  }
  for (const auto& r : cot.records) d2_lines.push_back(record_to_json(r));

  write_file(root / "d1_localization.jsonl", jsonl(d1_lines));
  write_file(root / "d2_cot.jsonl", jsonl(d2_lines));
  write_file(root / "cot_candidates.jsonl", jsonl(cand_lines));

  ojson outputs;
  outputs["trajectories"] = trajs.size();
  outputs["localization_records"] = d1_lines.size();
  outputs["cot_candidates"] = cot.candidates.size();
  outputs["cot_accepted"] = n_accepted;
  outputs["cot_rejections"] = reasons;
  outputs["cot_failed"] = cot.failed;
  outputs["seed"] = o.seed;
  outputs["failed"] = failed;
  write_manifest(o, manifest("make-sft", config, inputs, outputs));
  out << "make-sft: " << d1_lines.size() << " localization records, " << n_accepted << "/" << cot.candidates.size()
      << " CoT candidates accepted\n";
  return failed.empty() && cot.failed == 0 ? kExitOk : kExitPartial;
}

int cmd_eval(const Options& o, const ojson& config, std::ostream& out, std::ostream&) {
  require(o.predictions, "--predictions");
  const MissingPolicy mpolicy = missing_policy(o.missing);
  if (o.format != "table" && o.format != "json") throw Error(ErrorCode::InvalidInput, "--format must be table or json");
  std::vector<PredictionRecord> records;
  for (const auto& j : read_jsonl(o.predictions)) records.push_back(prediction_from_json(j));
  const MetricsReport rep = build_report(records, mpolicy, o.label);
  const std::string text = write_report(rep, o.format == "json" ? ReportFormat::Json : ReportFormat::Table);
  out << text;
  if (!o.out.empty()) {
    const auto root = std::filesystem::path(o.out);
    write_file(root / "report.txt", write_report(rep, ReportFormat::Table));
    write_file(root / "report.json", write_report(rep, ReportFormat::Json));
    ojson inputs;
    inputs["predictions"] = hash_file(o.predictions);
    ojson outputs;
    outputs["n"] = rep.n;
    outputs["n_missing"] = rep.n_missing;
    write_manifest(o, manifest("eval", config, inputs, outputs));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- wiring

void add_common(CLI::App* s, Options& o) {
  s->add_option("--config", o.config, "key = value config file; flags win");
  s->add_option("--out", o.out, "output directory");
  s->add_option("--jobs", o.jobs, "parallel workers")->check(CLI::PositiveNumber);
  s->add_option("--seed", o.seed, "random seed");
}

void add_trajectory_inputs(CLI::App* s, Options& o) {
  s->add_option("--trajectories", o.trajectories, "trajectory store (JSON lines)");
  s->add_option("--roads", o.roads, "road network (GeoJSON)");
  s->add_option("--split-file", o.split_file, "splits.json from preprocess");
  s->add_option("--split", o.split, "all | train | val | test");
  s->add_option("--limit", o.limit, "use at most this many trajectories (0 = all)");
  s->add_option("--canvas", o.canvas, "canvas side in pixels");
  s->add_option("--margin", o.margin, "viewport margin factor");
  s->add_option("--min-side", o.min_side, "minimum viewport side in meters");
}

void add_endpoint(CLI::App* s, Options& o) {
  s->add_option("--base-url", o.base_url, "chat-completions base URL");
  s->add_option("--model", o.model, "model name");
  s->add_option("--timeout", o.timeout, "request timeout in seconds");
  s->add_option("--max-retries", o.max_retries, "retries on transport errors, 429 and 5xx");
  s->add_option("--temperature", o.temperature, "sampling temperature");
  s->add_option("--max-tokens", o.max_tokens, "completion token cap");
  s->add_option("--max-concurrent", o.max_concurrent, "concurrent request cap");
  s->add_option("--rps", o.rps, "requests per second (0 = unlimited)");
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::optional<std::string> flag_value(const std::vector<std::string>& args, const std::string& flag) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == flag && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
  }
  return std::nullopt;
}

}  // namespace

std::vector<RawTrajectory> parse_raw(std::string_view text) {
  std::vector<RawTrajectory> out;
  std::unordered_map<std::string, std::size_t> index;
  auto add = [&](const std::string& id, const std::string& city, TimedPoint p) {
    auto it = index.find(id);
    if (it == index.end()) {
      index[id] = out.size();
      out.push_back({id, city, {}});
      it = index.find(id);
    }
    out[it->second].points.push_back(p);
  };

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::string first;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      first = trim(line);
      break;
    }
  }
  if (first.empty()) return out;

  if (first.front() == '{') {
    auto handle = [&](const std::string& l, std::size_t n) {
      auto j = nlohmann::json::parse(l, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(n) + ": not a JSON object");
      }
      try {
        const auto& idv = j.at("traj_id");
        const std::string id = idv.is_string() ? idv.get<std::string>() : idv.dump();
        const double t = j.contains("t") ? j["t"].get<double>() : j.at("t_seconds").get<double>();
        add(id, j.value("city", ""), {{j.at("lat").get<double>(), j.at("lon").get<double>()}, t});
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(n) + ": " + e.what());
      }
    };
    handle(first, line_no);
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) handle(line, line_no);
    }
    return out;
  }

  const auto header = split_csv_line(first);
  auto col = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      for (const char* n : names) {
        if (header[i] == n) return i;
      }
    }
    return std::nullopt;
  };
  const auto c_id = col({"traj_id"});
  const auto c_t = col({"t", "t_seconds", "timestamp"});
  const auto c_lat = col({"lat", "latitude"});
  const auto c_lon = col({"lon", "lng", "longitude"});
  const auto c_city = col({"city"});
  if (!c_id || !c_t || !c_lat || !c_lon) {
    throw Error(ErrorCode::ParseError, "CSV header must name traj_id, t, lat and lon");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " fields");
    }
    add(f[*c_id], c_city ? f[*c_city] : "",
        {{parse_number(f[*c_lat], "lat", line_no), parse_number(f[*c_lon], "lon", line_no)},
         parse_number(f[*c_t], "t", line_no)});
  }
  return out;
}

std::string trajectories_to_jsonl(const std::vector<StoredTrajectory>& trajs) {
  std::string out;
  for (const auto& t : trajs) {
    ojson j;
    j["traj_id"] = t.traj_id;
    j["city"] = t.city;
    j["dt"] = t.traj.dt;
    ojson pts = ojson::array();
    for (const auto& p : t.traj.points) pts.push_back({p.lat, p.lon});
    j["points"] = std::move(pts);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<StoredTrajectory> trajectories_from_jsonl(std::string_view text) {
  std::vector<StoredTrajectory> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::ParseError, "trajectory line " + std::to_string(n) + " is not a JSON object");
    }
    try {
      StoredTrajectory t;
      t.traj_id = j.at("traj_id").get<std::string>();
      t.city = j.value("city", "");
      t.traj.dt = j.value("dt", kSampleIntervalS);
      for (const auto& p : j.at("points")) t.traj.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "trajectory line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, std::string> parse_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || trim(t.substr(0, eq)).empty()) {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(n) + ": expected key = value");
    }
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

int run_cli(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Map-rendered next-location prediction harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->always_capture_default();

  auto* pre = app.add_subcommand("preprocess", "resample raw trajectories and split them 7:1:2");
  add_common(pre, o);
  pre->add_option("--raw", o.raw, "raw observations (CSV or JSON lines)");
  pre->add_option("--dt", o.dt, "sampling interval in seconds");

  auto* ren = app.add_subcommand("render", "draw one PNG per trajectory");
  add_common(ren, o);
  add_trajectory_inputs(ren, o);
  ren->add_option("--points", o.points, "12 (prediction input) or 13 (CoT generation)");

  auto* vg = app.add_subcommand("vgls", "run the map-halving search against an oracle");
  add_common(vg, o);
  add_trajectory_inputs(vg, o);
  add_endpoint(vg, o);
  vg->add_option("--oracle", o.oracle, "mock:perfect | mock:random | mock:noisy:p | http");
  vg->add_option("--rounds", o.rounds, "halving rounds");
  vg->add_option("--retries", o.retries, "re-asks when a reply cannot be parsed");
  vg->add_option("--policy", o.policy, "coin-flip | abort for replies that never parse");
  vg->add_flag("--save-images", o.save_images, "write every round's image");
  vg->add_option("--missing", o.missing, "exclude | penalize missing predictions");
  vg->add_option("--label", o.label, "method name in the report");

  auto* sc = app.add_subcommand("score", "score model responses with the four rewards");
  add_common(sc, o);
  add_trajectory_inputs(sc, o);
  sc->add_option("--responses", o.responses, "JSON lines of {traj_id, response}");
  sc->add_option("--w-dis", o.w_dis, "distance reward weight");
  sc->add_option("--w-road", o.w_road, "road reward weight");
  sc->add_option("--w-format", o.w_format, "format reward weight");
  sc->add_option("--w-step", o.w_step, "step reward weight");

  auto* gr = app.add_subcommand("grpo", "group advantages, KL and loss");
  add_common(gr, o);
  gr->add_option("--scored", o.scored, "JSON lines of {query_id, reward, policy_logps, ref_logps}");
  gr->add_option("--group-size", o.group_size, "responses per query");
  gr->add_flag("--lenient", o.lenient, "accept any group of two or more");
  gr->add_option("--beta", o.beta, "KL coefficient");

  auto* ms = app.add_subcommand("make-sft", "build the localization and CoT datasets");
  add_common(ms, o);
  add_trajectory_inputs(ms, o);
  add_endpoint(ms, o);
  ms->add_option("--oracle", o.oracle, "VGLS gate oracle");
  ms->add_option("--retries", o.retries, "re-asks when a gate reply cannot be parsed");
  ms->add_option("--generator", o.generator, "mock:scripted | mock:const:c | http");
  ms->add_option("--generator-url", o.generator_url, "generator base URL (default --base-url)");
  ms->add_option("--generator-model", o.generator_model, "generator model (default --model)");
  ms->add_option("--max-cot", o.max_cot, "stop after this many accepted CoT samples");
  ms->add_option("--gate-rounds", o.gate_rounds, "VGLS rounds a candidate must pass");
  ms->add_option("--threshold", o.threshold, "confidence must exceed this");

  auto* ev = app.add_subcommand("eval", "MAE, RMSE and road distance for predictions");
  add_common(ev, o);
  ev->add_option("--predictions", o.predictions, "JSON lines of prediction records");
  ev->add_option("--missing", o.missing, "exclude | penalize missing predictions");
  ev->add_option("--format", o.format, "table | json");
  ev->add_option("--label", o.label, "method name in the report");

  std::vector<std::string> args = args_in;
  try {
    CLI::App* chosen = nullptr;
    if (!args.empty()) {
      for (CLI::App* s : app.get_subcommands({})) {
        if (s->get_name() == args.front()) chosen = s;
      }
    }
    if (chosen) {
      if (auto path = flag_value(args, "--config")) {
        std::set<std::string> known;
        for (CLI::App* s : app.get_subcommands({})) {
          for (const CLI::Option* opt : s->get_options()) known.insert(opt->get_name());
        }
        for (const auto& [key, value] : parse_config(read_file(*path))) {
          const std::string flag = "--" + key;
          if (!known.count(flag) || key == "config") {
            throw Error(ErrorCode::InvalidInput, "unknown config key: " + key);
          }
          if (!chosen->get_option_no_throw(flag) || has_flag(args, flag)) continue;
          args.push_back(flag + "=" + value);
        }
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInput;
  } catch (const Error& e) {
    print_error(err, e.code(), e.what());
    return exit_for(e.code());
  }

  CLI::App* sub = app.get_subcommands().front();
  const ojson config = resolved_config(*sub);
  const std::string name = sub->get_name();
  try {
    if (name == "preprocess") return cmd_preprocess(o, config, out, err);
    if (name == "render") return cmd_render(o, config, out, err);
    if (name == "vgls") return cmd_vgls(o, config, out, err);
    if (name == "score") return cmd_score(o, config, out, err);
    if (name == "grpo") return cmd_grpo(o, config, out, err);
    if (name == "make-sft") return cmd_make_sft(o, config, out, err);
    if (name == "eval") return cmd_eval(o, config, out, err);
  } catch (const Error& e) {
    print_error(err, e.code(), e.what());
    return exit_for(e.code());
  } catch (const std::exception& e) {
    print_error(err, ErrorCode::Io, e.what());
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace trajoracle
