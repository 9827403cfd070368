#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace attralign::attribgen {

/// Where chat requests go. The auth token is looked up in the environment
/// variable named by `token_env` at send time and is never stored here.
struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string token_env = "ATTRALIGN_API_TOKEN";
  std::string model = "mock";
  std::chrono::milliseconds timeout{30000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff_base{500};

  void validate() const;
};

/// One chat turn: a text prompt, optionally about an image. The image
/// reference is passed through untouched (URL or base64 data URI).
struct ChatRequest {
  std::string model;
  std::string prompt;
  std::optional<std::string> image;
};

struct ChatResponse {
  int status = 200;
  std::string text;  // completion text on success, raw body otherwise
};

/// Sends a request and returns the HTTP-level outcome. Connection failures
/// throw Error(TransportError).
class Transport {
 public:
  virtual ~Transport() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// JSON chat-completion client: messages in, `choices[0].message.content` out.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(EndpointConfig cfg);
  ChatResponse send(const ChatRequest& request) override;

  /// Request body for `request`; exposed for wire-format tests.
  static std::string encode(const ChatRequest& request);
  /// Completion text from a response body; throws ParseError.
  static std::string decode(const std::string& body);

 private:
  EndpointConfig cfg_;
};

/// Answers requests with a callback and counts calls. Thread-safe.
class MockTransport final : public Transport {
 public:
  using Responder = std::function<ChatResponse(const ChatRequest&, std::size_t call_index)>;

  explicit MockTransport(Responder responder);
  ChatResponse send(const ChatRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
  std::mutex mu_;
};

/// Transcript entries are keyed by (model, prompt, image).
struct TranscriptEntry {
  ChatRequest request;
  ChatResponse response;
};

/// Forwards to another transport and keeps every exchange.
class RecordingTransport final : public Transport {
 public:
  explicit RecordingTransport(Transport& inner) : inner_(inner) {}
  ChatResponse send(const ChatRequest& request) override;
  std::vector<TranscriptEntry> transcript() const;
  /// One JSON object per line, in call order.
  void save(const std::filesystem::path& path) const;

 private:
  Transport& inner_;
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
};

/// Serves responses from a saved transcript; the last successful response
/// recorded for a request wins. Unknown requests throw TransportError.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(const std::vector<TranscriptEntry>& transcript);
  static ReplayTransport load(const std::filesystem::path& path);
  ChatResponse send(const ChatRequest& request) override;

 private:
  std::map<std::string, ChatResponse> responses_;
};

}  // namespace attralign::attribgen
