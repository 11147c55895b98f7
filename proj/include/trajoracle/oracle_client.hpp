#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "trajoracle/oracle.hpp"

namespace trajoracle {

enum class PromptType { Vgls, PointLocalization, CotGeneration, PredictNext };

struct PromptKind {
  PromptType type = PromptType::Vgls;
  int index = 0;  // 1..12, PointLocalization only
};

/// Prompt templates read from a directory of text files
/// (vgls.txt, point_localization.txt, cot_generation.txt, predict_next.txt).
class PromptLibrary {
 public:
  explicit PromptLibrary(std::filesystem::path dir = default_dir());

  /// Template text with parameters substituted. Throws TemplateMissing.
  std::string text(const PromptKind& kind) const;

  static std::filesystem::path default_dir();

 private:
  std::filesystem::path dir_;
};

/// A single chat-completions user message: prompt text plus, when given,
/// the PNG as a base64 data URI.
nlohmann::ordered_json build_messages(const std::string& prompt_text, std::span<const std::uint8_t> png = {});
nlohmann::ordered_json build_prompt(const PromptLibrary& library, const PromptKind& kind,
                                    std::span<const std::uint8_t> png = {});

struct EndpointConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key;
  double timeout_seconds = 60.0;
  int max_retries = 2;
  double temperature = 0.0;
  int max_tokens = 1024;
  double backoff_base_seconds = 1.0;
  int max_concurrent = 4;
  double requests_per_second = 1.0;  // <= 0 disables the limit

  /// Throws InvalidInput on a malformed URL or negative retries.
  void validate() const;
  static std::string api_key_from_env();
};

/// Blocking chat-completions client. Safe for concurrent use; concurrency
/// is capped and requests are spaced by the configured rate.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig config);

  /// First choice's text. Retries transport errors, 429 and 5xx with
  /// exponential backoff; throws AuthError on 401/403 and OracleTransport
  /// once retries are exhausted.
  std::string query(const nlohmann::ordered_json& messages);

  std::string request_body(const nlohmann::ordered_json& messages) const;
  const EndpointConfig& config() const noexcept { return config_; }

 private:
  void acquire();
  void release();
  void pace();

  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::chrono::steady_clock::time_point next_slot_{};
};

/// Oracle backed by a chat-completions endpoint.
class HttpOracle final : public Oracle {
 public:
  explicit HttpOracle(ChatClient& client) : client_(client) {}
  std::string ask(const OracleRequest& request) override;

 private:
  ChatClient& client_;
};

/// Append-only JSON-lines record of oracle exchanges, keyed by
/// OracleRequest::key(). Reopening an existing file restores the replies.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);

  std::optional<std::string> find(const std::string& key) const;
  /// Writes and flushes the entry before returning.
  void append(const OracleRequest& request, const std::string& image_sha256, const std::string& reply);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> replies_;
};

/// Answers from the journal when possible, otherwise asks `inner` and
/// records the exchange before handing the reply back.
class JournaledOracle final : public Oracle {
 public:
  JournaledOracle(Oracle& inner, Journal& journal) : inner_(inner), journal_(journal) {}
  std::string ask(const OracleRequest& request) override;

 private:
  Oracle& inner_;
  Journal& journal_;
};

}  // namespace trajoracle
