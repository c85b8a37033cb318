#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "pemuta/openai_provider.hpp"

using namespace pemuta;
using namespace pemuta::llm;

namespace {

/// Local chat-completions endpoint on 127.0.0.1 with a scripted status.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      ++hits_;
      int status = status_.load();
      res.status = status;
      if (status == 200) {
        res.set_content(
            R"({"choices":[{"message":{"role":"assistant","content":"scored"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}})",
            "application/json");
      } else {
        res.set_content(R"({"error":"nope"})", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  [[nodiscard]] std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  void set_status(int s) { status_ = s; }
  [[nodiscard]] int hits() const { return hits_; }
  std::string last_body_;
  std::string last_auth_;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> status_{200};
  std::atomic<int> hits_{0};
};

ChatRequest request() {
  ChatRequest r;
  r.model_id = "some-model";
  r.messages = {{Role::System, "persona"}, {Role::User, "assess this"}};
  r.temperature = 0;
  r.max_output_tokens = 64;
  return r;
}

PacingPolicy fast() {
  PacingPolicy p;
  p.min_interval = 0;
  p.max_retries = 2;
  p.backoff_base = 0.001;
  return p;
}

}  // namespace

TEST(OpenAIBody, RequestShape) {
  auto j = to_openai_body(request());
  EXPECT_EQ(j["model"], "some-model");
  EXPECT_EQ(j["messages"][0]["role"], "system");
  EXPECT_EQ(j["messages"][1]["content"], "assess this");
  EXPECT_EQ(j["max_tokens"], 64);
  EXPECT_EQ(j["temperature"], 0.0);
}

TEST(OpenAIBody, ResponseParsing) {
  auto r = from_openai_body(R"({"choices":[{"message":{"content":"hi"}}]})");
  EXPECT_EQ(r.content, "hi");
  EXPECT_THROW(from_openai_body("not json"), ProviderError);
  EXPECT_THROW(from_openai_body(R"({"choices":[]})"), ProviderError);
}

TEST(OpenAIProvider, RoundTripAgainstLocalServer) {
  FakeEndpoint endpoint;
  auto provider = std::make_shared<OpenAIProvider>(endpoint.base(), "sk-test", 5);
  ChatClient client(provider, fast());
  auto r = client.chat(request());
  EXPECT_EQ(r.content, "scored");
  EXPECT_EQ(r.token_usage.prompt, 12);
  EXPECT_EQ(r.token_usage.completion, 3);
  EXPECT_EQ(endpoint.last_auth_, "Bearer sk-test");
  auto sent = nlohmann::json::parse(endpoint.last_body_);
  EXPECT_EQ(sent["model"], "some-model");
  EXPECT_EQ(sent["messages"].size(), 2u);
  EXPECT_NE(client.provider_id().find("127.0.0.1"), std::string::npos);
}

TEST(OpenAIProvider, UnauthorizedSurfacesWithoutRetry) {
  FakeEndpoint endpoint;
  endpoint.set_status(401);
  ChatClient client(std::make_shared<OpenAIProvider>(endpoint.base(), "bad", 5), fast());
  EXPECT_THROW(client.chat(request()), AuthError);
  EXPECT_EQ(endpoint.hits(), 1);
}

TEST(OpenAIProvider, ServerErrorsAreRetried) {
  FakeEndpoint endpoint;
  endpoint.set_status(503);
  ChatClient client(std::make_shared<OpenAIProvider>(endpoint.base(), "", 5), fast());
  EXPECT_THROW(client.chat(request()), ProviderError);
  EXPECT_EQ(endpoint.hits(), 3);
}

TEST(OpenAIProvider, ConnectionRefusedIsTransient) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  ChatClient client(std::make_shared<OpenAIProvider>("http://127.0.0.1:" + std::to_string(port) + "/v1", "", 1),
                    fast());
  EXPECT_THROW(client.chat(request()), Error);
  EXPECT_EQ(client.dispatch_times().size(), 3u);
}

TEST(OpenAIProvider, BaseUrlNeedsScheme) {
  EXPECT_THROW(OpenAIProvider("localhost:8080/v1", ""), InvalidRequest);
}
