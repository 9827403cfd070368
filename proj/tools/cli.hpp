#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace attralign::cli {

/// Runs one command line (argv[0] is the program name). Returns 0 on
/// success, 1 on a domain error (message on `err`), 2 on a usage error
/// (message and synopsis on `err`).
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Provenance record written next to every command output.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  // resolved option values, defaults included
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  double elapsed_seconds = 0.0;

  std::string to_json() const;
};

/// SHA-256 of a file, or for a directory the SHA-256 of its sorted
/// `relative-path digest` lines.
std::string digest_path(const std::filesystem::path& path);

}  // namespace attralign::cli
