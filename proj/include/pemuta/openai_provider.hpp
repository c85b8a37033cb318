#pragma once

// OpenAI-compatible chat-completions provider over cpp-httplib.
// HTTPS needs CPPHTTPLIB_OPENSSL_SUPPORT defined and OpenSSL linked.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "pemuta/llmclient.hpp"

namespace pemuta::llm {

inline constexpr const char* kEnvApiBase = "PEMUTA_API_BASE";
inline constexpr const char* kEnvApiKey = "PEMUTA_API_KEY";
inline constexpr const char* kEnvModel = "PEMUTA_MODEL";

/// Request body in the chat-completions schema.
inline nlohmann::json to_openai_body(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", prompting::to_string(m.role)}, {"content", m.content}});
  }
  return {{"model", request.model_id},
          {"messages", messages},
          {"temperature", request.temperature},
          {"max_tokens", request.max_output_tokens}};
}

/// `choices[0].message.content` plus usage; throws ProviderError on a body
/// that does not follow the schema.
inline ChatResponse from_openai_body(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProviderError(200, "response is not JSON");
  ChatResponse r;
  try {
    r.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError(200, "response lacks choices[0].message.content");
  }
  if (j.contains("usage") && j["usage"].is_object()) {
    r.token_usage.prompt = j["usage"].value("prompt_tokens", 0);
    r.token_usage.completion = j["usage"].value("completion_tokens", 0);
  }
  return r;
}

class OpenAIProvider final : public Provider {
 public:
  /// `base_url` like "https://host/v1"; requests go to `<base_url>/chat/completions`.
  OpenAIProvider(std::string base_url, std::string api_key, double timeout_seconds = 300)
      : api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw InvalidRequest("API base must include a scheme");
    auto path_start = base_url.find('/', scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base_url.rfind("https://", 0) == 0) {
      throw InvalidRequest("this build has no TLS support; use an http:// API base");
    }
#endif
  }

  /// Reads PEMUTA_API_BASE and PEMUTA_API_KEY.
  static std::shared_ptr<OpenAIProvider> from_env() {
    const char* base = std::getenv(kEnvApiBase);
    const char* key = std::getenv(kEnvApiKey);
    if (!base || !*base) throw InvalidRequest(std::string(kEnvApiBase) + " is not set");
    return std::make_shared<OpenAIProvider>(base, key ? key : "");
  }

  ChatResponse complete(const ChatRequest& request) override {
    httplib::Client client(origin_);
    auto secs = static_cast<time_t>(timeout_seconds_);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers,
                           to_openai_body(request).dump(), "application/json");
    if (!res) {
      auto err = res.error();
      bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                       err == httplib::Error::Write;
      throw TransportFailure(0, httplib::to_string(err), timed_out);
    }
    if (res->status != 200) throw TransportFailure(res->status, res->body);
    auto r = from_openai_body(res->body);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                       .count();
    r.provider_id = id();
    return r;
  }

  [[nodiscard]] std::string id() const override { return "openai-compatible:" + origin_; }

 private:
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  double timeout_seconds_;
};

}  // namespace pemuta::llm
