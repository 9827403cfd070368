#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "attralign/attribgen/transport.hpp"

namespace attralign::attribgen {

/// Write-once response store: one file per key under `dir`, where the key
/// is the SHA-256 of (prompt, sample reference, model). Concurrent writers of
/// the same key keep whichever value landed first.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(const std::string& prompt, const std::string& sample_ref, const std::string& model);

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const std::string& value);

  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }

 private:
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Transport plus retries and caching. Status 429, 5xx and connection
/// failures are retried with delays backoff_base * 2^attempt; other statuses
/// fail immediately. After the last attempt a single TransportError is thrown.
class ChatClient {
 public:
  ChatClient(Transport& transport, EndpointConfig cfg, ResponseCache* cache = nullptr, Sleeper sleeper = {});

  /// `sample_ref` identifies the input the prompt is about (empty for
  /// prompts that do not depend on a sample).
  std::string complete(const std::string& prompt, const std::string& sample_ref,
                       const std::optional<std::string>& image = std::nullopt);

  const EndpointConfig& endpoint() const noexcept { return cfg_; }
  std::size_t attempts() const noexcept { return attempts_.load(); }

 private:
  Transport& transport_;
  EndpointConfig cfg_;
  ResponseCache* cache_;
  Sleeper sleeper_;
  std::atomic<std::size_t> attempts_{0};
};

}  // namespace attralign::attribgen
