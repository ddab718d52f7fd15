#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "optdialog/image.hpp"
#include "optdialog/prompt.hpp"
#include "optdialog/setting.hpp"

namespace optdialog {

struct DecodingParams {
  double temperature = 0.2;
  int max_new_tokens = 512;
};

// Where a request sits in the dialogue protocol. Not sent over the wire; the
// scripted mock keys its answers on it.
struct RequestTag {
  std::string image_id;
  AgentRole role = AgentRole::Generalist;
  int round = 1;
  int attempt = 1;
  AblationSetting setting = AblationSetting::D;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  ImageAttachment image;
  double temperature = 0.2;
  int max_new_tokens = 512;
  RequestTag tag;
};

// Throws std::invalid_argument on an empty message list, negative
// temperature, or max_new_tokens < 1.
void validate(const ChatRequest& request);

struct ChatResponse {
  std::string text;
  std::string finish_reason = "stop";
  bool truncated = false;  // finish_reason == "length"
};

// Model inference boundary. Implementations must accept concurrent calls.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Throws Error(BackendUnavailable) once transport retries are exhausted.
  virtual ChatResponse chat(const ChatRequest& request) const = 0;
  virtual std::string backend_id() const = 0;
  virtual std::string model() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock

struct MockKey {
  std::string image_id;
  AgentRole role = AgentRole::Generalist;
  int round = 1;
  int attempt = 1;
  std::optional<AblationSetting> setting;  // empty: any setting

  auto operator<=>(const MockKey&) const = default;
};

struct MockEntry {
  std::string response;
  std::string finish_reason = "stop";
};

class MockScript {
 public:
  MockScript() = default;
  explicit MockScript(std::string default_response) : default_response_(std::move(default_response)) {}

  // Throws MalformedScript on a duplicate key.
  void add(MockKey key, MockEntry entry);

  // Setting-specific entry, then setting-agnostic entry, then the default.
  MockEntry lookup(const RequestTag& tag) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& default_response() const { return default_response_; }

 private:
  std::map<MockKey, MockEntry> entries_;
  std::string default_response_;
};

MockScript parse_mock_script(std::string_view text);
MockScript load_mock_script(const std::filesystem::path& path);

class MockBackend final : public ChatBackend {
 public:
  explicit MockBackend(MockScript script, std::string id = "mock") : script_(std::move(script)), id_(std::move(id)) {}

  ChatResponse chat(const ChatRequest& request) const override;
  std::string backend_id() const override { return id_; }
  std::string model() const override { return "scripted"; }

  void set_recording(bool on) { recording_ = on; }
  std::vector<ChatRequest> recorded() const;
  std::size_t call_count() const;

 private:
  MockScript script_;
  std::string id_;
  bool recording_ = false;
  mutable std::mutex mu_;
  mutable std::vector<ChatRequest> log_;
  mutable std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Chat-completion wire client

struct HttpBackendOptions {
  std::string url;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model = "qwen3-vl";
  std::optional<std::string> api_key;
  std::chrono::milliseconds timeout{120'000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  ResizePolicy resize;
};

struct ParsedUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;
};

ParsedUrl parse_endpoint_url(const std::string& url);

// JSON body in the chat-completion convention: system/user/assistant
// messages; the image rides as an image_url content part on the first user
// message.
nlohmann::json build_request_body(const ChatRequest& request, const std::string& model, const ResizePolicy& resize);
ChatResponse parse_response_body(const std::string& body);

class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  ChatResponse chat(const ChatRequest& request) const override;
  std::string backend_id() const override { return options_.url; }
  std::string model() const override { return options_.model; }

  const HttpBackendOptions& options() const { return options_; }

 private:
  HttpBackendOptions options_;
  ParsedUrl endpoint_;
};

}  // namespace optdialog
