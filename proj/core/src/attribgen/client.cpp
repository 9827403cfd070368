#include "attralign/attribgen/client.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "attralign/binary_io.hpp"
#include "attralign/error.hpp"

namespace attralign::attribgen {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::string ResponseCache::key(const std::string& prompt, const std::string& sample_ref, const std::string& model) {
  std::string material;
  for (const std::string* part : {&prompt, &sample_ref, &model}) {
    material += std::to_string(part->size());
    material += ':';
    material += *part;
  }
  return sha256_hex(material);
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  const auto path = dir_ / key;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ++misses_;
    return std::nullopt;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  ++hits_;
  return ss.str();
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  const auto final_path = dir_ / key;
  if (std::filesystem::exists(final_path)) return;
  std::ostringstream tmp_name;
  tmp_name << key << ".tmp." << std::this_thread::get_id();
  const auto tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write cache entry " + tmp.string());
    out << value;
  }
  // A hard link fails when the key already exists, so the first writer wins.
  std::error_code ec;
  std::filesystem::create_hard_link(tmp, final_path, ec);
  std::filesystem::remove(tmp);
}

ChatClient::ChatClient(Transport& transport, EndpointConfig cfg, ResponseCache* cache, Sleeper sleeper)
    : transport_(transport), cfg_(std::move(cfg)), cache_(cache), sleeper_(std::move(sleeper)) {
  cfg_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatClient::complete(const std::string& prompt, const std::string& sample_ref,
                                 const std::optional<std::string>& image) {
  std::string key;
  if (cache_ != nullptr) {
    key = ResponseCache::key(prompt, sample_ref, cfg_.model);
    if (auto hit = cache_->get(key)) return *hit;
  }

  const ChatRequest request{cfg_.model, prompt, image};
  std::string last_error;
  std::size_t made = 0;
  for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(cfg_.backoff_base * (std::int64_t{1} << (attempt - 1)));
    ++attempts_;
    ++made;
    try {
      const ChatResponse r = transport_.send(request);
      if (r.status == 200) {
        if (cache_ != nullptr) cache_->put(key, r.text);
        return r.text;
      }
      last_error = "HTTP " + std::to_string(r.status) + ": " + r.text;
      if (r.status != 429 && r.status < 500) break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::TransportError, "giving up after " + std::to_string(made) +
                                             " attempt(s) for " + (sample_ref.empty() ? "request" : sample_ref) +
                                             ": " + last_error);
}

}  // namespace attralign::attribgen
