#include "trajoracle/oracle_client.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "trajoracle/error.hpp"
#include "trajoracle/hash.hpp"

#ifndef TRAJORACLE_PROMPT_DIR
#define TRAJORACLE_PROMPT_DIR "data/prompts"
#endif

namespace trajoracle {
namespace {

using ojson = nlohmann::ordered_json;

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

const char* template_file(PromptType t) {
  switch (t) {
    case PromptType::Vgls: return "vgls.txt";
    case PromptType::PointLocalization: return "point_localization.txt";
    case PromptType::CotGeneration: return "cot_generation.txt";
    case PromptType::PredictNext: return "predict_next.txt";
  }
  return "";
}

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

std::optional<SplitUrl> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return std::nullopt;
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return std::nullopt;
  const auto host_start = scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  SplitUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  if (out.scheme_host_port.size() <= host_start) return std::nullopt;
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::string content_text(const nlohmann::json& content) {
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
        out += part["text"].get<std::string>();
      }
    }
    return out;
  }
  throw Error(ErrorCode::OracleTransport, "response message has no text content");
}

}  // namespace

PromptLibrary::PromptLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path PromptLibrary::default_dir() {
  if (const char* env = std::getenv("TRAJORACLE_PROMPT_DIR"); env && *env) {
    return env;
  }
  return TRAJORACLE_PROMPT_DIR;
}

std::string PromptLibrary::text(const PromptKind& kind) const {
  if (kind.type == PromptType::PointLocalization && (kind.index < 1 || kind.index > 12)) {
    throw Error(ErrorCode::InvalidInput, "point index must be in [1, 12]");
  }
  const auto path = dir_ / template_file(kind.type);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::TemplateMissing, "prompt template not found: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  if (kind.type == PromptType::PointLocalization) {
    replace_all(text, "{index}", std::to_string(kind.index));
  }
  return text;
}

ojson build_messages(const std::string& prompt_text, std::span<const std::uint8_t> png) {
  ojson content = ojson::array();
  content.push_back({{"type", "text"}, {"text", prompt_text}});
  if (!png.empty()) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
  }
  ojson messages = ojson::array();
  messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  return messages;
}

ojson build_prompt(const PromptLibrary& library, const PromptKind& kind, std::span<const std::uint8_t> png) {
  return build_messages(library.text(kind), png);
}

void EndpointConfig::validate() const {
  if (!split_url(base_url)) {
    throw Error(ErrorCode::InvalidInput, "endpoint base_url must be http(s)://host[:port][/path]");
  }
  if (max_retries < 0 || max_concurrent < 1 || !(timeout_seconds > 0.0) || backoff_base_seconds < 0.0) {
    throw Error(ErrorCode::InvalidInput, "invalid endpoint limits");
  }
}

std::string EndpointConfig::api_key_from_env() {
  const char* key = std::getenv("TRAJORACLE_API_KEY");
  return key ? key : "";
}

ChatClient::ChatClient(EndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto parts = split_url(config_.base_url);
  scheme_host_port_ = parts->scheme_host_port;
  path_ = parts->path + "/chat/completions";
}

std::string ChatClient::request_body(const ojson& messages) const {
  ojson body;
  body["model"] = config_.model_name;
  body["messages"] = messages;
  body["temperature"] = config_.temperature;
  body["max_tokens"] = config_.max_tokens;
  return body.dump();
}

void ChatClient::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return in_flight_ < config_.max_concurrent; });
  ++in_flight_;
}

void ChatClient::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

void ChatClient::pace() {
  if (config_.requests_per_second <= 0.0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(1.0 / config_.requests_per_second));
  }
  std::this_thread::sleep_until(slot);
}

std::string ChatClient::query(const ojson& messages) {
  const std::string body = request_body(messages);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = config_.backoff_base_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    pace();
    acquire();
    httplib::Result res;
    {
      httplib::Client cli(scheme_host_port_);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(config_.timeout_seconds));
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      res = cli.Post(path_, headers, body, "application/json");
    }
    release();

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw Error(ErrorCode::AuthError, "endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status != 200) {
      throw Error(ErrorCode::OracleTransport, "HTTP " + std::to_string(status));
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
      throw Error(ErrorCode::OracleTransport, "malformed chat-completions response");
    }
    const auto& choice = j["choices"][0];
    if (!choice.contains("message") || !choice["message"].is_object() || !choice["message"].contains("content")) {
      throw Error(ErrorCode::OracleTransport, "response choice has no message");
    }
    return content_text(choice["message"]["content"]);
  }
  throw Error(ErrorCode::OracleTransport, "giving up after " + std::to_string(config_.max_retries + 1) +
                                              " attempts (" + last_error + ")");
}

std::string HttpOracle::ask(const OracleRequest& request) {
  std::vector<std::uint8_t> png;
  if (request.image_png) png = request.image_png();
  return client_.query(build_messages(request.prompt_text, png));
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  std::uintmax_t complete = 0;
  {
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (in.eof()) break;  // no newline: torn by a crash
      complete += line.size() + 1;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j.contains("reply")) continue;
      replies_[j["key"].get<std::string>()] = j["reply"].get<std::string>();
    }
  }
  // Drop a torn tail so the next append starts a fresh line; that request is re-asked.
  std::error_code ec;
  if (std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > complete) {
    std::filesystem::resize_file(path_, complete);
  }
}

std::optional<std::string> Journal::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = replies_.find(key);
  if (it == replies_.end()) return std::nullopt;
  return it->second;
}

void Journal::append(const OracleRequest& request, const std::string& image_sha256, const std::string& reply) {
  ojson line;
  line["key"] = request.key();
  line["traj_id"] = request.traj_id;
  line["purpose"] = request.purpose;
  line["round"] = request.round;
  line["attempt"] = request.attempt;
  line["prompt_sha256"] = sha256_hex(request.prompt_text);
  line["image_sha256"] = image_sha256;
  line["reply"] = reply;
  std::lock_guard lock(mu_);
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << line.dump() << '\n';
  out.flush();
  if (!out) {
    throw Error(ErrorCode::Io, "cannot append to journal " + path_.string());
  }
  replies_[request.key()] = reply;
}

std::size_t Journal::size() const {
  std::lock_guard lock(mu_);
  return replies_.size();
}

std::string JournaledOracle::ask(const OracleRequest& request) {
  if (auto hit = journal_.find(request.key())) {
    return *hit;
  }
  std::string image_hash;
  OracleRequest forwarded = request;
  if (request.image_png) {
    forwarded.image_png = [&request, &image_hash]() {
      auto png = request.image_png();
      image_hash = sha256_hex(png);
      return png;
    };
  }
  std::string reply = inner_.ask(forwarded);
  journal_.append(request, image_hash, reply);
  return reply;
}

}  // namespace trajoracle
