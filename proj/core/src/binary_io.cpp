#include "attralign/binary_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace attralign {

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
}

std::string hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[bytes[i] >> 4];
    out[2 * i + 1] = kDigits[bytes[i] & 0x0F];
  }
  return out;
}

}  // namespace

void write_block(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  }
  for (double x : m.data()) {
    std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(x));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) {
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
}

Matrix read_block(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  const std::size_t count = rows * cols;
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(bits))) {
      const std::size_t offset = i * sizeof(bits) + static_cast<std::size_t>(in.gcount());
      throw Error(ErrorCode::FormatError,
                  path.filename().string() + ": truncated at byte offset " + std::to_string(offset) +
                      " (expected " + std::to_string(count * sizeof(bits)) + " bytes)");
    }
    data[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw Error(ErrorCode::FormatError,
                path.filename().string() + ": unexpected data after byte offset " +
                    std::to_string(count * 8));
  }
  try {
    return Matrix(rows, cols, std::move(data));
  } catch (const Error& e) {
    throw Error(ErrorCode::FormatError, path.filename().string() + ": " + e.what());
  }
}

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  return hex(digest.data(), len);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
}

}  // namespace attralign
