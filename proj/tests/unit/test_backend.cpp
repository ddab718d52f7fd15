#include <gtest/gtest.h>

#include <openssl/evp.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "optdialog/backend.hpp"
#include "optdialog/error.hpp"
#include "stub_server.hpp"
#include "test_paths.hpp"

using namespace optdialog;
using namespace std::chrono_literals;

namespace {

ChatRequest request_for(std::string image_id, AgentRole role, int round, int attempt,
                        AblationSetting setting = AblationSetting::D) {
  ChatRequest req;
  req.messages = {{"system", "sys"}, {"user", "look"}};
  req.image = ImageAttachment::from_uri(image_id, "https://example.invalid/" + image_id + ".jpg");
  req.tag = {image_id, role, round, attempt, setting};
  return req;
}

// Padding bytes are left in place; only the header is inspected.
std::string decode_base64(const std::string& in) {
  std::string out(in.size(), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::pair<unsigned, unsigned> png_size(const std::string& bytes) {
  const auto be32 = [&](std::size_t at) {
    return (unsigned(static_cast<unsigned char>(bytes[at])) << 24) | (unsigned(static_cast<unsigned char>(bytes[at + 1])) << 16) |
           (unsigned(static_cast<unsigned char>(bytes[at + 2])) << 8) | unsigned(static_cast<unsigned char>(bytes[at + 3]));
  };
  return {be32(16), be32(20)};
}

HttpBackendOptions fast_options(const std::string& url) {
  HttpBackendOptions o;
  o.url = url;
  o.timeout = 5s;
  o.backoff_base = 1ms;
  return o;
}

}  // namespace

TEST(MockScriptTest, ParsesEntries) {
  auto script = parse_mock_script(R"({
    "default_response": "dunno",
    "entries": [
      {"image_id": "a", "role": "food_scientist", "round": 1, "attempt": 1, "response": "x"},
      {"image_id": "a", "role": "vision_analyst", "round": 1, "attempt": 1, "response": "y"},
      {"image_id": "a", "role": "generalist", "round": 1, "attempt": 1, "setting": "b", "response": "z",
       "finish_reason": "length"}
    ]})");
  EXPECT_EQ(script.size(), 3u);
  EXPECT_EQ(script.default_response(), "dunno");
}

TEST(MockScriptTest, FixtureErrors) {
  for (const char* f : {"script_duplicate.json", "script_no_default.json", "script_bad_role.json", "script_bad_round.json"}) {
    EXPECT_EQ(thrown_code([&] { load_mock_script(fixture(std::string("malformed/") + f)); }), ErrorCode::MalformedScript)
        << f;
  }
  EXPECT_EQ(thrown_code([] { parse_mock_script("{not json"); }), ErrorCode::MalformedScript);
}

TEST(MockScriptTest, DuplicateAddRejected) {
  MockScript script("d");
  script.add({"a", AgentRole::Generalist, 1, 1, std::nullopt}, {"x"});
  EXPECT_EQ(thrown_code([&] { script.add({"a", AgentRole::Generalist, 1, 1, std::nullopt}, {"y"}); }),
            ErrorCode::MalformedScript);
  EXPECT_NO_THROW(script.add({"a", AgentRole::Generalist, 1, 1, AblationSetting::B}, {"y"}));
}

TEST(MockBackendTest, LookupOrder) {
  MockScript script("fallback");
  script.add({"a", AgentRole::Generalist, 1, 1, std::nullopt}, {"any setting"});
  script.add({"a", AgentRole::Generalist, 1, 1, AblationSetting::C}, {"setting c"});
  script.add({"a", AgentRole::Generalist, 1, 2, std::nullopt}, {"cut", "length"});
  MockBackend backend(script);
  EXPECT_EQ(backend.chat(request_for("a", AgentRole::Generalist, 1, 1, AblationSetting::B)).text, "any setting");
  EXPECT_EQ(backend.chat(request_for("a", AgentRole::Generalist, 1, 1, AblationSetting::C)).text, "setting c");
  EXPECT_EQ(backend.chat(request_for("b", AgentRole::Generalist, 1, 1)).text, "fallback");
  const auto cut = backend.chat(request_for("a", AgentRole::Generalist, 1, 2));
  EXPECT_TRUE(cut.truncated);
  EXPECT_EQ(cut.finish_reason, "length");
  EXPECT_EQ(backend.call_count(), 4u);
}

TEST(MockBackendTest, RejectsInvalidRequest) {
  MockBackend backend(MockScript("x"));
  auto req = request_for("a", AgentRole::Generalist, 1, 1);
  req.temperature = -0.1;
  EXPECT_THROW(backend.chat(req), std::invalid_argument);
  req = request_for("a", AgentRole::Generalist, 1, 1);
  req.max_new_tokens = 0;
  EXPECT_THROW(backend.chat(req), std::invalid_argument);
  req.max_new_tokens = 1;
  req.messages.clear();
  EXPECT_THROW(backend.chat(req), std::invalid_argument);
}

TEST(MockBackendTest, ConcurrentCallsIndependentOfInterleaving) {
  MockScript script("default");
  for (int i = 0; i < 50; ++i) {
    script.add({"img" + std::to_string(i), AgentRole::FoodScientist, 1, 1, std::nullopt}, {"answer " + std::to_string(i)});
  }
  MockBackend backend(script);
  std::vector<std::string> seen(50 * 8);
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < 8; ++w) {
      workers.emplace_back([&, w] {
        for (int i = 0; i < 50; ++i) {
          const int idx = (i * 7 + w * 13) % 50;
          seen[w * 50 + idx] = backend.chat(request_for("img" + std::to_string(idx), AgentRole::FoodScientist, 1, 1)).text;
        }
      });
    }
  }
  for (int w = 0; w < 8; ++w)
    for (int i = 0; i < 50; ++i) EXPECT_EQ(seen[w * 50 + i], "answer " + std::to_string(i));
  EXPECT_EQ(backend.call_count(), 400u);
}

TEST(EndpointUrl, DefaultsPath) {
  auto p = parse_endpoint_url("http://localhost:8000");
  EXPECT_EQ(p.scheme_host_port, "http://localhost:8000");
  EXPECT_EQ(p.path, "/v1/chat/completions");
  EXPECT_EQ(parse_endpoint_url("https://h/api/chat").path, "/api/chat");
  EXPECT_THROW(parse_endpoint_url("localhost:8000"), std::invalid_argument);
}

TEST(RequestBody, ChatCompletionShape) {
  auto req = request_for("a", AgentRole::DecisionMaker, 2, 1);
  req.messages.push_back({"assistant", "prior"});
  req.messages.push_back({"user", "reminder"});
  const auto body = build_request_body(req, "qwen3-vl", {});
  EXPECT_EQ(body["model"], "qwen3-vl");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
  EXPECT_EQ(body["max_tokens"], 512);
  ASSERT_EQ(body["messages"].size(), 4u);
  EXPECT_EQ(body["messages"][0]["content"], "sys");
  EXPECT_EQ(body["messages"][1]["content"][1]["image_url"]["url"], "https://example.invalid/a.jpg");
  EXPECT_EQ(body["messages"][3]["content"], "reminder");
}

TEST(RequestBody, FileImageResizedToLongestSide) {
  auto req = request_for("wide", AgentRole::Generalist, 1, 1);
  req.image = ImageAttachment::from_file("wide", fixture("images/wide.png"));
  const auto body = build_request_body(req, "m", ResizePolicy{640});
  const std::string url = body["messages"][1]["content"][1]["image_url"]["url"];
  const std::string prefix = "data:image/png;base64,";
  ASSERT_EQ(url.rfind(prefix, 0), 0u) << url.substr(0, 40);
  const auto [w, h] = png_size(decode_base64(url.substr(prefix.size())));
  EXPECT_EQ(w, 640u);
  EXPECT_EQ(h, 320u);
}

TEST(RequestBody, MissingImageFileIsIoError) {
  auto req = request_for("x", AgentRole::Generalist, 1, 1);
  req.image = ImageAttachment::from_file("x", "/nonexistent/x.jpg");
  EXPECT_EQ(thrown_code([&] { build_request_body(req, "m", {}); }), ErrorCode::Io);
}

TEST(ResponseBody, ParsesChoice) {
  auto r = parse_response_body(stub::completion_body("hello", "length"));
  EXPECT_EQ(r.text, "hello");
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(thrown_code([] { parse_response_body("{}"); }), ErrorCode::BackendUnavailable);
  EXPECT_EQ(thrown_code([] { parse_response_body("nope"); }), ErrorCode::BackendUnavailable);
}

TEST(HttpBackendTest, ReturnsStubBody) {
  stub::ChatStub server([](int, const nlohmann::json&) {
    return stub::ChatStub::Reply{200, stub::completion_body("Category: apple; Reasoning: red")};
  });
  auto opts = fast_options(server.url());
  opts.api_key = "secret";
  HttpBackend backend(opts);
  const auto r = backend.chat(request_for("a", AgentRole::FoodScientist, 1, 1));
  EXPECT_EQ(r.text, "Category: apple; Reasoning: red");
  ASSERT_EQ(server.requests().size(), 1u);
  EXPECT_EQ(server.auth_headers()[0], "Bearer secret");
  EXPECT_DOUBLE_EQ(server.requests()[0]["temperature"].get<double>(), 0.2);
  EXPECT_EQ(server.requests()[0]["max_tokens"], 512);
}

TEST(HttpBackendTest, HonoursPerRequestDecoding) {
  stub::ChatStub server([](int, const nlohmann::json&) { return stub::ChatStub::Reply{200, stub::completion_body("ok")}; });
  HttpBackend backend(fast_options(server.url()));
  auto req = request_for("a", AgentRole::FoodScientist, 1, 1);
  req.temperature = 0.7;
  req.max_new_tokens = 64;
  backend.chat(req);
  EXPECT_DOUBLE_EQ(server.requests()[0]["temperature"].get<double>(), 0.7);
  EXPECT_EQ(server.requests()[0]["max_tokens"], 64);
}

TEST(HttpBackendTest, RetriesTransientThenSucceeds) {
  stub::ChatStub server([](int i, const nlohmann::json&) {
    if (i < 2) return stub::ChatStub::Reply{i == 0 ? 503 : 429, "{}"};
    return stub::ChatStub::Reply{200, stub::completion_body("third time")};
  });
  HttpBackend backend(fast_options(server.url()));
  EXPECT_EQ(backend.chat(request_for("a", AgentRole::FoodScientist, 1, 1)).text, "third time");
  EXPECT_EQ(server.requests().size(), 3u);
}

TEST(HttpBackendTest, GivesUpAfterThreeAttempts) {
  stub::ChatStub server([](int, const nlohmann::json&) { return stub::ChatStub::Reply{503, "{}"}; });
  HttpBackend backend(fast_options(server.url()));
  EXPECT_EQ(thrown_code([&] { backend.chat(request_for("a", AgentRole::FoodScientist, 1, 1)); }),
            ErrorCode::BackendUnavailable);
  EXPECT_EQ(server.requests().size(), 3u);
}

TEST(HttpBackendTest, ClientErrorNotRetried) {
  stub::ChatStub server([](int, const nlohmann::json&) { return stub::ChatStub::Reply{400, "{}"}; });
  HttpBackend backend(fast_options(server.url()));
  EXPECT_EQ(thrown_code([&] { backend.chat(request_for("a", AgentRole::FoodScientist, 1, 1)); }),
            ErrorCode::BackendUnavailable);
  EXPECT_EQ(server.requests().size(), 1u);
}

TEST(HttpBackendTest, UnreachableEndpoint) {
  auto opts = fast_options("http://127.0.0.1:1/v1/chat/completions");
  opts.timeout = 1s;
  HttpBackend backend(opts);
  EXPECT_EQ(thrown_code([&] { backend.chat(request_for("a", AgentRole::FoodScientist, 1, 1)); }),
            ErrorCode::BackendUnavailable);
}
