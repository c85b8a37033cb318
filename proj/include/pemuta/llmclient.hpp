#pragma once

// Provider-agnostic chat completion with client-side pacing and retries,
// plus a scripted mock provider for offline runs.

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pemuta/dataset.hpp"
#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"
#include "pemuta/prompting.hpp"

namespace pemuta::llm {

using prompting::Message;
using prompting::Role;

class AuthError : public Error {
 public:
  AuthError(int status, const std::string& body)
      : Error("AuthError", "provider rejected credentials (HTTP " + std::to_string(status) + "): " + body) {}
};

class RateLimited : public Error {
 public:
  explicit RateLimited(int attempts)
      : Error("RateLimited", "still rate limited after " + std::to_string(attempts) + " attempts") {}
};

class ProviderError : public Error {
 public:
  ProviderError(int status, std::string body)
      : Error("ProviderError", "provider failed (HTTP " + std::to_string(status) + "): " + body),
        status_(status),
        body_(std::move(body)) {}
  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

class Timeout : public Error {
 public:
  explicit Timeout(int attempts)
      : Error("Timeout", "request timed out after " + std::to_string(attempts) + " attempts") {}
};

class UnmatchedRequest : public Error {
 public:
  explicit UnmatchedRequest(const std::string& preview)
      : Error("UnmatchedRequest", "no mock script entry matches request: " + preview) {}
};

class InvalidRequest : public Error {
 public:
  explicit InvalidRequest(const std::string& what) : Error("InvalidRequest", what) {}
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_output_tokens = 4096;

  void validate() const {
    bool has_user = false;
    for (const auto& m : messages) has_user = has_user || m.role == Role::User;
    if (!has_user) throw InvalidRequest("request needs at least one user message");
    if (!(temperature >= 0.0)) throw InvalidRequest("temperature must be >= 0");
    if (max_output_tokens <= 0) throw InvalidRequest("max_output_tokens must be positive");
  }

  /// All message contents in order, role-tagged. Mock matching keys on this.
  [[nodiscard]] std::string content() const {
    std::string out;
    for (const auto& m : messages) {
      out += "[";
      out += prompting::to_string(m.role);
      out += "]\n" + m.content + "\n";
    }
    return out;
  }
};

struct TokenUsage {
  int prompt = 0;
  int completion = 0;
};

struct ChatResponse {
  std::string content;
  TokenUsage token_usage;
  double latency_ms = 0;
  std::string provider_id;
};

struct PacingPolicy {
  /// Seconds between successive dispatches through one client.
  double min_interval = 30.0;
  int max_retries = 3;
  /// First retry waits this long; each further retry doubles it.
  double backoff_base = 2.0;

  void validate() const {
    if (!(min_interval >= 0)) throw InvalidRequest("min_interval must be >= 0");
    if (max_retries < 0) throw InvalidRequest("max_retries must be >= 0");
    if (!(backoff_base >= 0)) throw InvalidRequest("backoff_base must be >= 0");
  }

  [[nodiscard]] double backoff(int retry) const { return backoff_base * std::pow(2.0, retry); }
};

/// Transport-level failure reported by a provider. The client decides
/// whether it is transient. `status` is 0 when no HTTP response arrived.
class TransportFailure : public Error {
 public:
  TransportFailure(int status, std::string body, bool timed_out = false)
      : Error("TransportFailure", "HTTP " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)),
        timed_out_(timed_out) {}

  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] const std::string& body() const noexcept { return body_; }
  [[nodiscard]] bool timed_out() const noexcept { return timed_out_; }
  [[nodiscard]] bool transient() const noexcept {
    return timed_out_ || status_ == 0 || status_ == 408 || status_ == 429 || status_ >= 500;
  }

 private:
  int status_;
  std::string body_;
  bool timed_out_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  [[nodiscard]] virtual std::string id() const = 0;
};

/// Serializes dispatch through one pacing gate and retries transient
/// failures with exponential backoff. Shareable across threads.
class ChatClient {
 public:
  using Clock = std::chrono::steady_clock;

  ChatClient(std::shared_ptr<Provider> provider, PacingPolicy policy)
      : provider_(std::move(provider)), policy_(policy) {
    policy_.validate();
  }

  ChatResponse chat(const ChatRequest& request) {
    request.validate();
    for (int attempt = 0;; ++attempt) {
      try {
        return dispatch(request);
      } catch (const TransportFailure& f) {
        if (f.status() == 401 || f.status() == 403) throw AuthError(f.status(), f.body());
        if (!f.transient()) throw ProviderError(f.status(), f.body());
        if (attempt >= policy_.max_retries) {
          const int attempts = attempt + 1;
          if (f.status() == 429) throw RateLimited(attempts);
          if (f.timed_out() || f.status() == 408) throw Timeout(attempts);
          throw ProviderError(f.status(), f.body());
        }
        auto wait = policy_.backoff(attempt);
        {
          std::lock_guard lock(log_mutex_);
          backoffs_.push_back(wait);
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      }
    }
  }

  [[nodiscard]] std::vector<Clock::time_point> dispatch_times() const {
    std::lock_guard lock(log_mutex_);
    return dispatches_;
  }

  /// Backoff delays slept so far, in seconds.
  [[nodiscard]] std::vector<double> backoff_log() const {
    std::lock_guard lock(log_mutex_);
    return backoffs_;
  }

  [[nodiscard]] const PacingPolicy& policy() const noexcept { return policy_; }
  [[nodiscard]] std::string provider_id() const { return provider_->id(); }

 private:
  ChatResponse dispatch(const ChatRequest& request) {
    std::lock_guard gate(gate_mutex_);
    if (last_dispatch_) {
      auto ready = *last_dispatch_ + std::chrono::duration_cast<Clock::duration>(
                                         std::chrono::duration<double>(policy_.min_interval));
      std::this_thread::sleep_until(ready);
    }
    auto start = Clock::now();
    last_dispatch_ = start;
    {
      std::lock_guard lock(log_mutex_);
      dispatches_.push_back(start);
    }
    auto response = provider_->complete(request);
    if (response.latency_ms == 0) {
      response.latency_ms =
          std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }
    if (response.content.empty()) throw ProviderError(200, "empty completion");
    return response;
  }

  std::shared_ptr<Provider> provider_;
  PacingPolicy policy_;
  std::mutex gate_mutex_;
  std::optional<Clock::time_point> last_dispatch_;
  mutable std::mutex log_mutex_;
  std::vector<Clock::time_point> dispatches_;
  std::vector<double> backoffs_;
};

// ---------------------------------------------------------------------------
// Mock provider

struct MockFailure {
  int status = 500;
  std::string body;
  bool timed_out = false;
};

/// One script line: a predicate over request content and the canned
/// outcome. `once` entries are consumed by their first match.
struct ScriptEntry {
  std::vector<std::string> contains;  // all must occur
  std::vector<std::string> excludes;  // none may occur
  std::function<bool(const ChatRequest&)> predicate;  // optional, programmatic scripts only
  std::optional<std::string> reply;
  std::optional<MockFailure> failure;
  bool once = false;

  [[nodiscard]] bool matches(const ChatRequest& request, std::string_view content) const {
    for (const auto& s : contains) {
      if (content.find(s) == std::string_view::npos) return false;
    }
    for (const auto& s : excludes) {
      if (content.find(s) != std::string_view::npos) return false;
    }
    return !predicate || predicate(request);
  }
};

struct MatchRecord {
  /// Index into the script, or nullopt when nothing matched.
  std::optional<std::size_t> entry;
  std::string content_hash;
};

/// Answers each request with the first matching script entry. Safe under
/// concurrent calls; matching depends only on request content.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::vector<ScriptEntry> script) : script_(std::move(script)) {
    consumed_.assign(script_.size(), false);
  }

  /// Script file: `{"entries": [...]}` or a bare array of entries, each
  /// `{"contains": [..], "excludes": [..], "reply": "..", "once": bool}` or
  /// with `"error": {"status": 429, "body": "..", "timeout": bool}`.
  static std::vector<ScriptEntry> parse_script(const nlohmann::json& j) {
    const auto& entries = j.is_object() && j.contains("entries") ? j.at("entries") : j;
    if (!entries.is_array()) throw InvalidRequest("mock script must be an array of entries");
    std::vector<ScriptEntry> script;
    for (const auto& e : entries) {
      if (!e.is_object()) throw InvalidRequest("mock script entry must be an object");
      ScriptEntry entry;
      auto strings = [&](const char* key) {
        std::vector<std::string> out;
        if (!e.contains(key)) return out;
        const auto& v = e.at(key);
        if (v.is_string()) {
          out.push_back(v.get<std::string>());
        } else if (v.is_array()) {
          for (const auto& s : v) out.push_back(s.get<std::string>());
        } else {
          throw InvalidRequest(std::string("mock script '") + key + "' must be string or array");
        }
        return out;
      };
      entry.contains = strings("contains");
      entry.excludes = strings("excludes");
      if (e.contains("reply")) entry.reply = e.at("reply").get<std::string>();
      if (e.contains("error")) {
        const auto& err = e.at("error");
        MockFailure f;
        f.status = err.value("status", 0);
        f.body = err.value("body", std::string());
        f.timed_out = err.value("timeout", false);
        entry.failure = f;
      }
      entry.once = e.value("once", false);
      if (entry.reply.has_value() == entry.failure.has_value()) {
        throw InvalidRequest("mock script entry needs exactly one of 'reply' or 'error'");
      }
      script.push_back(std::move(entry));
    }
    return script;
  }

  static std::shared_ptr<MockProvider> load(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(dataset::read_file(path), nullptr, false);
    if (j.is_discarded()) throw InvalidRequest("mock script is not valid JSON: " + path.string());
    return std::make_shared<MockProvider>(parse_script(j));
  }

  ChatResponse complete(const ChatRequest& request) override {
    const auto content = request.content();
    std::unique_lock lock(mutex_);
    for (std::size_t i = 0; i < script_.size(); ++i) {
      if (consumed_[i] || !script_[i].matches(request, content)) continue;
      if (script_[i].once) consumed_[i] = true;
      log_.push_back({i, detail::to_hex(detail::fnv1a64(content))});
      const auto& entry = script_[i];
      lock.unlock();
      if (entry.failure) {
        throw TransportFailure(entry.failure->status, entry.failure->body, entry.failure->timed_out);
      }
      ChatResponse r;
      r.content = *entry.reply;
      r.token_usage.prompt = static_cast<int>(prompting::estimate_tokens(content));
      r.token_usage.completion = static_cast<int>(prompting::estimate_tokens(r.content));
      r.latency_ms = 0;
      r.provider_id = id();
      return r;
    }
    log_.push_back({std::nullopt, detail::to_hex(detail::fnv1a64(content))});
    throw UnmatchedRequest(content.substr(0, 160));
  }

  [[nodiscard]] std::string id() const override { return "mock"; }

  [[nodiscard]] std::vector<MatchRecord> match_log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

 private:
  std::vector<ScriptEntry> script_;
  std::vector<bool> consumed_;
  mutable std::mutex mutex_;
  std::vector<MatchRecord> log_;
};

}  // namespace pemuta::llm
