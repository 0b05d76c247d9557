#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/parallel.hpp"
#include "digesttab/gateway/gateway.hpp"
#include "digesttab/gateway/http_providers.hpp"
#include "digesttab/gateway/stub_providers.hpp"
#include "local_server.hpp"
#include "test_util.hpp"

using namespace digesttab;
using namespace digesttab::gateway;
using digesttab::testkit::LocalServer;

namespace {

GatewayOptions quiet_options() {
  GatewayOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

class FlakyProvider : public ChatProvider {
 public:
  FlakyProvider(int failures, ProviderFailure kind) : failures_(failures), kind_(kind) {}
  std::string name() const override { return "flaky"; }
  ChatResponse complete(const ChatRequest&) override {
    ++calls;
    if (calls <= failures_) throw ProviderError(kind_, "boom");
    return ChatResponse{"ok", FinishReason::Stop, {}, "", false};
  }
  std::atomic<int> calls{0};

 private:
  int failures_;
  ProviderFailure kind_;
};

}  // namespace

TEST(ChatRequest, ValidateRejectsBadRequests) {
  ChatRequest r;
  r.model_id = "m";
  EXPECT_THROW(r.validate(), ValidationError);
  r.messages.push_back({"user", "hi"});
  EXPECT_NO_THROW(r.validate());
  r.max_tokens = 0;
  EXPECT_THROW(r.validate(), ValidationError);
}

TEST(Gateway, SecondIdenticalCallServedFromCache) {
  auto echo = std::make_shared<EchoChatProvider>();
  Gateway gw(quiet_options(), echo, nullptr);
  auto req = ChatRequest::single("m", "hello world");
  auto a = gw.chat(req);
  auto b = gw.chat(req);
  EXPECT_EQ(a.text, "hello world");
  EXPECT_EQ(a.text, b.text);
  EXPECT_FALSE(a.from_cache);
  EXPECT_TRUE(b.from_cache);
  EXPECT_EQ(echo->call_count(), 1u);
}

TEST(Gateway, DigestChangesWithAnyField) {
  Gateway gw(quiet_options(), std::make_shared<EchoChatProvider>(), nullptr);
  auto base = ChatRequest::single("m", "x");
  auto d = gw.chat_digest(base);
  EXPECT_EQ(d, gw.chat_digest(ChatRequest::single("m", "x")));
  auto r1 = base;
  r1.model_id = "m2";
  auto r2 = base;
  r2.temperature = 0.5;
  auto r3 = base;
  r3.system = "s";
  auto r4 = base;
  r4.max_tokens = 7;
  auto r5 = base;
  r5.stop = std::vector<std::string>{"\n"};
  for (const auto& r : {r1, r2, r3, r4, r5}) EXPECT_NE(gw.chat_digest(r), d);
}

TEST(Gateway, DiskCacheLayoutAndReplay) {
  testkit::TempDir dir;
  auto opts = quiet_options();
  opts.cache_dir = dir.path();
  auto req = ChatRequest::single("gpt-x", "persist me");
  std::string digest;
  {
    Gateway gw(opts, std::make_shared<EchoChatProvider>(), nullptr);
    digest = gw.chat(req).digest;
  }
  auto file = dir.path() / "echo" / "gpt-x" / (digest + ".json");
  ASSERT_TRUE(std::filesystem::exists(file));
  auto stored = ojson::parse(read_file(file));
  EXPECT_EQ(stored["response"]["text"], "persist me");

  auto replay_opts = opts;
  replay_opts.chat_provider_name = "echo";
  Gateway replay(replay_opts, nullptr, nullptr);
  auto r = replay.chat(req);
  EXPECT_TRUE(r.from_cache);
  EXPECT_EQ(r.text, "persist me");
  EXPECT_EQ(replay.stats().chat_network_calls, 0u);
  try {
    replay.chat(ChatRequest::single("gpt-x", "never recorded"));
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.failure(), ProviderFailure::CacheMiss);
  }
}

TEST(Gateway, ContextOverflowIsClassifiedAndNotRetried) {
  auto echo = std::make_shared<EchoChatProvider>(10);
  Gateway gw(quiet_options(), echo, nullptr);
  try {
    gw.chat(ChatRequest::single("m", std::string(50, 'x')));
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.failure(), ProviderFailure::ContextOverflow);
  }
  EXPECT_EQ(echo->call_count(), 1u);
}

TEST(Gateway, TransportRetriesThenSucceeds) {
  auto flaky = std::make_shared<FlakyProvider>(3, ProviderFailure::Server);
  std::vector<std::chrono::milliseconds> sleeps;
  auto opts = quiet_options();
  opts.sleeper = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
  Gateway gw(opts, flaky, nullptr);
  EXPECT_EQ(gw.chat(ChatRequest::single("m", "x")).text, "ok");
  EXPECT_EQ(flaky->calls.load(), 4);
  ASSERT_EQ(sleeps.size(), 3u);
  EXPECT_EQ(sleeps[1], sleeps[0] * 2);
  EXPECT_EQ(sleeps[2], sleeps[0] * 4);
}

TEST(Gateway, RetryBudgetExhausted) {
  auto flaky = std::make_shared<FlakyProvider>(10, ProviderFailure::RateLimited);
  Gateway gw(quiet_options(), flaky, nullptr);
  EXPECT_THROW(gw.chat(ChatRequest::single("m", "x")), ProviderError);
  EXPECT_EQ(flaky->calls.load(), 4);
}

TEST(Gateway, BadResponseIsNotRetried) {
  auto flaky = std::make_shared<FlakyProvider>(10, ProviderFailure::BadResponse);
  Gateway gw(quiet_options(), flaky, nullptr);
  EXPECT_THROW(gw.chat(ChatRequest::single("m", "x")), ProviderError);
  EXPECT_EQ(flaky->calls.load(), 1);
}

TEST(Gateway, BoundedInFlightCalls) {
  std::atomic<int> current{0}, peak{0};
  auto slow = std::make_shared<ScriptedChatProvider>([&](const ChatRequest& r) {
    int now = ++current;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --current;
    return r.messages.back().content;
  });
  auto opts = quiet_options();
  opts.max_in_flight = 2;
  Gateway gw(opts, slow, nullptr);
  parallel_for(24, 8, [&](std::size_t i) { gw.chat(ChatRequest::single("m", "q" + std::to_string(i))); });
  EXPECT_LE(peak.load(), 2);
  EXPECT_EQ(slow->call_count(), 24u);
}

TEST(Gateway, EmbedDeterministicAndCached) {
  auto emb = std::make_shared<HashEmbedder>(32, 5);
  auto opts = quiet_options();
  opts.embed_model_id = "e1";
  Gateway gw(opts, nullptr, emb);
  auto v = gw.embed({"a", "a", "b"});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], v[1]);
  EXPECT_NE(v[0], v[2]);
  EXPECT_EQ(v[0].size(), 32u);
  double norm = 0;
  for (float x : v[2]) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-5);
  gw.embed({"a", "b"});
  EXPECT_EQ(emb->call_count(), 1u);
  EXPECT_THROW(gw.embed({}), PreconditionError);
  EXPECT_THROW(gw.embed({""}), PreconditionError);
}

TEST(HashEmbedder, ReproducibleAcrossInstances) {
  HashEmbedder a(16, 3), b(16, 3), c(16, 4);
  EXPECT_EQ(a.vector_for("text"), b.vector_for("text"));
  EXPECT_NE(a.vector_for("text"), c.vector_for("text"));
}

TEST(RateLimiter, WaitsWhenBucketEmpty) {
  std::vector<std::chrono::milliseconds> waits;
  RateLimiter lim(1000.0, 1.0, [&](std::chrono::milliseconds d) {
    waits.push_back(d);
    std::this_thread::sleep_for(d);
  });
  lim.acquire();
  lim.acquire();
  EXPECT_FALSE(waits.empty());
}

TEST(HttpProviders, SplitBaseUrl) {
  EXPECT_EQ(split_base_url("https://api.x.com/v1/"), (std::pair<std::string, std::string>{"https://api.x.com", "/v1"}));
  EXPECT_EQ(split_base_url("http://h:8080"), (std::pair<std::string, std::string>{"http://h:8080", ""}));
  EXPECT_THROW(split_base_url("nohost"), ValidationError);
}

TEST(HttpProviders, ChatAndEmbedAgainstLocalServer) {
  std::string seen_auth;
  LocalServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen_auth = req.get_header_value("Authorization");
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json out = {{"choices", {{{"message", {{"content", "echo:" + body["messages"].back()["content"].get<std::string>()}}},
                                          {"finish_reason", "length"}}}},
                            {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 4}}}};
      res.set_content(out.dump(), "application/json");
    });
    s.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json data = nlohmann::json::array();
      for (std::size_t i = 0; i < body["input"].size(); ++i) {
        data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
      }
      res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
  });
  OpenAiChatProvider chat({server.base(), "k123"});
  auto r = chat.complete(ChatRequest::single("m", "hi", "sys"));
  EXPECT_EQ(r.text, "echo:hi");
  EXPECT_EQ(r.finish_reason, FinishReason::Length);
  EXPECT_EQ(r.usage.completion_tokens, 4);
  EXPECT_EQ(seen_auth, "Bearer k123");

  OpenAiEmbedProvider emb({server.base(), "k"});
  auto v = emb.embed("e", {"a", "b"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[1][0], 1.0f);
}

TEST(HttpProviders, StatusMapping) {
  EXPECT_THROW(throw_for_status(401, ""), AuthError);
  EXPECT_THROW(throw_for_status(504, ""), TimeoutError);
  auto failure_of = [](int status, const std::string& body) {
    try {
      throw_for_status(status, body);
    } catch (const ProviderError& e) {
      return e.failure();
    }
    return ProviderFailure::CacheMiss;
  };
  EXPECT_EQ(failure_of(429, ""), ProviderFailure::RateLimited);
  EXPECT_EQ(failure_of(503, ""), ProviderFailure::Server);
  EXPECT_EQ(failure_of(400, R"({"error":{"code":"context_length_exceeded"}})"), ProviderFailure::ContextOverflow);
  EXPECT_EQ(failure_of(400, "nope"), ProviderFailure::BadResponse);
}

TEST(HttpProviders, ServerErrorsRetriedThroughGateway) {
  std::atomic<int> hits{0};
  LocalServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      if (++hits < 3) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"choices":[{"message":{"content":"fine"},"finish_reason":"stop"}]})", "application/json");
    });
  });
  Gateway gw(quiet_options(), std::make_shared<OpenAiChatProvider>(HttpEndpoint{server.base(), ""}), nullptr);
  EXPECT_EQ(gw.chat(ChatRequest::single("m", "x")).text, "fine");
  EXPECT_EQ(hits.load(), 3);
}

TEST(HttpProviders, UnreachableHostIsTransportError) {
  OpenAiChatProvider chat({"http://127.0.0.1:1/v1", "", std::chrono::seconds(2)});
  EXPECT_ANY_THROW(chat.complete(ChatRequest::single("m", "x")));
}
