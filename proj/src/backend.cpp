#include "optdialog/backend.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "optdialog/error.hpp"

namespace optdialog {

void validate(const ChatRequest& request) {
  if (request.messages.empty()) throw std::invalid_argument("chat request has no messages");
  if (!(request.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (request.max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
}

// ---------------------------------------------------------------------------
// Mock

void MockScript::add(MockKey key, MockEntry entry) {
  if (entries_.contains(key)) {
    throw Error(ErrorCode::MalformedScript,
                fmt::format("duplicate entry for ({}, {}, round {}, attempt {})", key.image_id, to_string(key.role),
                            key.round, key.attempt),
                key.image_id);
  }
  entries_.emplace(std::move(key), std::move(entry));
}

MockEntry MockScript::lookup(const RequestTag& tag) const {
  MockKey key{tag.image_id, tag.role, tag.round, tag.attempt, tag.setting};
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  key.setting.reset();
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return MockEntry{default_response_, "stop"};
}

namespace {

[[noreturn]] void bad_script(const std::string& message) { throw Error(ErrorCode::MalformedScript, message); }

int positive_int(const nlohmann::json& entry, const char* field, std::size_t index) {
  const auto it = entry.find(field);
  if (it == entry.end() || !it->is_number_integer() || it->get<long long>() < 1) {
    bad_script(fmt::format("entries[{}].{} must be an integer >= 1", index, field));
  }
  return it->get<int>();
}

std::string required_string(const nlohmann::json& entry, const char* field, std::size_t index) {
  const auto it = entry.find(field);
  if (it == entry.end() || !it->is_string()) bad_script(fmt::format("entries[{}].{} must be a string", index, field));
  return it->get<std::string>();
}

}  // namespace

MockScript parse_mock_script(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    bad_script(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) bad_script("script must be a JSON object");
  const auto def = doc.find("default_response");
  if (def == doc.end() || !def->is_string()) bad_script("missing string field 'default_response'");

  MockScript script(def->get<std::string>());
  const auto entries = doc.find("entries");
  if (entries == doc.end()) return script;
  if (!entries->is_array()) bad_script("'entries' must be an array");

  for (std::size_t i = 0; i < entries->size(); ++i) {
    const auto& e = (*entries)[i];
    if (!e.is_object()) bad_script(fmt::format("entries[{}] must be an object", i));
    MockKey key;
    key.image_id = required_string(e, "image_id", i);
    const auto role = parse_role(required_string(e, "role", i));
    if (!role) bad_script(fmt::format("entries[{}].role is not a known role", i));
    key.role = *role;
    key.round = positive_int(e, "round", i);
    key.attempt = positive_int(e, "attempt", i);
    if (const auto s = e.find("setting"); s != e.end()) {
      const auto setting = s->is_string() ? parse_setting(s->get<std::string>()) : std::nullopt;
      if (!setting) bad_script(fmt::format("entries[{}].setting must be one of a, b, c, d", i));
      key.setting = setting;
    }
    MockEntry entry{required_string(e, "response", i), "stop"};
    if (const auto f = e.find("finish_reason"); f != e.end()) {
      if (!f->is_string()) bad_script(fmt::format("entries[{}].finish_reason must be a string", i));
      entry.finish_reason = f->get<std::string>();
    }
    script.add(std::move(key), std::move(entry));
  }
  return script;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open mock script " + path.string(), path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_mock_script(buf.str());
}

ChatResponse MockBackend::chat(const ChatRequest& request) const {
  validate(request);
  const MockEntry entry = script_.lookup(request.tag);
  {
    std::lock_guard lock(mu_);
    ++calls_;
    if (recording_) log_.push_back(request);
  }
  return ChatResponse{entry.response, entry.finish_reason, entry.finish_reason == "length"};
}

std::vector<ChatRequest> MockBackend::recorded() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// HTTP

ParsedUrl parse_endpoint_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint URL needs a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw std::invalid_argument("unsupported URL scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  if (out.scheme_host_port.size() <= scheme_end + 3) throw std::invalid_argument("endpoint URL has no host: " + url);
  if (out.path.empty() || out.path == "/") out.path = "/v1/chat/completions";
  return out;
}

nlohmann::json build_request_body(const ChatRequest& request, const std::string& model, const ResizePolicy& resize) {
  nlohmann::json messages = nlohmann::json::array();
  bool image_attached = false;
  for (const auto& m : request.messages) {
    if (m.role == "user" && !image_attached) {
      messages.push_back({
          {"role", "user"},
          {"content", nlohmann::json::array({
                          {{"type", "text"}, {"text", m.content}},
                          {{"type", "image_url"}, {"image_url", {{"url", to_data_uri(request.image, resize)}}}},
                      })},
      });
      image_attached = true;
    } else {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }
  }
  if (!image_attached) throw std::invalid_argument("chat request needs a user message to carry the image");
  return {
      {"model", model},
      {"messages", std::move(messages)},
      {"temperature", request.temperature},
      {"max_tokens", request.max_new_tokens},
  };
}

ChatResponse parse_response_body(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("response is not JSON: ") + e.what());
  }
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::BackendUnavailable, "response carries no choices");
  }
  const auto& choice = choices->front();
  ChatResponse out;
  const auto message = choice.find("message");
  if (message != choice.end() && message->contains("content") && (*message)["content"].is_string()) {
    out.text = (*message)["content"].get<std::string>();
  } else if (choice.contains("text") && choice["text"].is_string()) {
    out.text = choice["text"].get<std::string>();
  } else {
    throw Error(ErrorCode::BackendUnavailable, "response choice has no text content");
  }
  if (const auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string()) {
    out.finish_reason = fr->get<std::string>();
  }
  out.truncated = out.finish_reason == "length";
  return out;
}

HttpBackend::HttpBackend(HttpBackendOptions options)
    : options_(std::move(options)), endpoint_(parse_endpoint_url(options_.url)) {
  if (options_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

namespace {

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

ChatResponse HttpBackend::chat(const ChatRequest& request) const {
  validate(request);
  const std::string body = build_request_body(request, options_.model, options_.resize).dump();

  httplib::Headers headers;
  if (options_.api_key && !options_.api_key->empty()) {
    headers.emplace("Authorization", "Bearer " + *options_.api_key);
  }

  std::string last_failure;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(options_.backoff_base * (1 << (attempt - 2)));

    httplib::Client client(endpoint_.scheme_host_port);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    const auto res = client.Post(endpoint_.path, headers, body, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return parse_response_body(res->body);
    last_failure = fmt::format("HTTP {}", res->status);
    if (!transient_status(res->status)) break;
  }
  throw Error(ErrorCode::BackendUnavailable, fmt::format("{} failed: {}", options_.url, last_failure), options_.url);
}

}  // namespace optdialog
