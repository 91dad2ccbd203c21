#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tajweed::cli {

/// One JSON line appended to the run manifest per command invocation.
struct ManifestEntry {
  std::string command;
  std::vector<std::string> argv;
  std::string config_path;
  nlohmann::json seed = nullptr;
  std::map<std::string, std::string> input_hashes;  // path -> sha256
  std::vector<std::string> output_paths;
  nlohmann::json details = nlohmann::json::object();
  int exit_status = 0;
  std::string error;

  void hash_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path) { output_paths.push_back(path.string()); }
  nlohmann::json to_json() const;
};

/// Appends under an exclusive file lock so concurrent commands interleave
/// whole lines.
void append_manifest(const std::filesystem::path& manifest, const ManifestEntry& entry);

/// UTC "YYYYMMDDTHHMMSSZ".
std::string utc_stamp();
std::string utc_iso8601();

}  // namespace tajweed::cli
