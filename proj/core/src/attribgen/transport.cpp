#include "attralign/attribgen/transport.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>

#include "attralign/error.hpp"

namespace attralign::attribgen {

using json = nlohmann::json;

void EndpointConfig::validate() const {
  if (timeout.count() <= 0) throw Error(ErrorCode::ConfigError, "endpoint timeout must be positive");
  if (backoff_base.count() < 0) throw Error(ErrorCode::ConfigError, "endpoint backoff must be non-negative");
  if (base_url.empty()) throw Error(ErrorCode::ConfigError, "endpoint base_url is empty");
}

HttpTransport::HttpTransport(EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string HttpTransport::encode(const ChatRequest& request) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  if (request.image) content.push_back({{"type", "image_url"}, {"image_url", {{"url", *request.image}}}});
  json body{{"model", request.model}, {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  return body.dump();
}

std::string HttpTransport::decode(const std::string& body) {
  try {
    const json j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError,
                std::string("unexpected chat response shape (") + e.what() + "); raw response: " + body);
  }
}

ChatResponse HttpTransport::send(const ChatRequest& request) {
  httplib::Client client(cfg_.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.token_env.c_str()); token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto result = client.Post(cfg_.path, headers, encode(request), "application/json");
  if (!result) {
    throw Error(ErrorCode::TransportError,
                "request to " + cfg_.base_url + cfg_.path + " failed: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) return {result->status, result->body};
  return {200, decode(result->body)};
}

MockTransport::MockTransport(Responder responder) : responder_(std::move(responder)) {}

ChatResponse MockTransport::send(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  const std::size_t index = calls_++;
  return responder_(request, index);
}

namespace {

json entry_json(const TranscriptEntry& e) {
  json req{{"model", e.request.model}, {"prompt", e.request.prompt}};
  req["image"] = e.request.image ? json(*e.request.image) : json(nullptr);
  return {{"request", req}, {"status", e.response.status}, {"text", e.response.text}};
}

std::string transcript_key(const ChatRequest& r) {
  json k{r.model, r.prompt, r.image ? json(*r.image) : json(nullptr)};
  return k.dump();
}

}  // namespace

ChatResponse RecordingTransport::send(const ChatRequest& request) {
  ChatResponse response = inner_.send(request);
  std::lock_guard lock(mu_);
  entries_.push_back({request, response});
  return response;
}

std::vector<TranscriptEntry> RecordingTransport::transcript() const {
  std::lock_guard lock(mu_);
  return entries_;
}

void RecordingTransport::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write transcript " + path.string());
  for (const TranscriptEntry& e : transcript()) out << entry_json(e).dump() << '\n';
}

ReplayTransport::ReplayTransport(const std::vector<TranscriptEntry>& transcript) {
  for (const TranscriptEntry& e : transcript) {
    const std::string key = transcript_key(e.request);
    auto it = responses_.find(key);
    if (it == responses_.end() || e.response.status == 200) responses_[key] = e.response;
  }
}

ReplayTransport ReplayTransport::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read transcript " + path.string());
  std::vector<TranscriptEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TranscriptEntry e;
      e.request.model = j.at("request").at("model").get<std::string>();
      e.request.prompt = j.at("request").at("prompt").get<std::string>();
      if (!j.at("request").at("image").is_null()) e.request.image = j["request"]["image"].get<std::string>();
      e.response.status = j.at("status").get<int>();
      e.response.text = j.at("text").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return ReplayTransport(entries);
}

ChatResponse ReplayTransport::send(const ChatRequest& request) {
  const auto it = responses_.find(transcript_key(request));
  if (it == responses_.end()) {
    throw Error(ErrorCode::TransportError, "request not present in the transcript: " + request.prompt);
  }
  return it->second;
}

}  // namespace attralign::attribgen
