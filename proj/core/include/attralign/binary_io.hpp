#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "attralign/numerics.hpp"

namespace attralign {

/// Raw little-endian float64 row-major block, no header. Shapes live in the
/// accompanying manifest.
void write_block(const std::filesystem::path& path, const Matrix& m);

/// Reads exactly rows*cols doubles. A short file raises FormatError naming
/// the byte offset where data ran out; trailing bytes are also a FormatError.
Matrix read_block(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace attralign
