#include "manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <ctime>

#include "tajweed/error.hpp"
#include "tajweed/hashing.hpp"

namespace tajweed::cli {

void ManifestEntry::hash_input(const std::filesystem::path& path) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(path, ec)) input_hashes[path.string()] = sha256_file_hex(path);
}

nlohmann::json ManifestEntry::to_json() const {
  nlohmann::json j = {{"timestamp", utc_iso8601()},
                      {"command", command},
                      {"argv", argv},
                      {"config_path", config_path},
                      {"seed", seed},
                      {"input_hashes", input_hashes},
                      {"output_paths", output_paths},
                      {"exit_status", exit_status}};
  if (!details.empty()) j["details"] = details;
  if (!error.empty()) j["error"] = error;
  return j;
}

void append_manifest(const std::filesystem::path& manifest, const ManifestEntry& entry) {
  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  const std::string line = entry.to_json().dump() + "\n";
  const int fd = ::open(manifest.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw RuntimeFailure("cannot open manifest " + manifest.string());
  ::flock(fd, LOCK_EX);
  std::size_t off = 0;
  bool ok = true;
  while (off < line.size()) {
    const auto n = ::write(fd, line.data() + off, line.size() - off);
    if (n <= 0) {
      ok = false;
      break;
    }
    off += static_cast<std::size_t>(n);
  }
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (!ok) throw RuntimeFailure("failed writing manifest " + manifest.string());
}

namespace {
std::string format_now(const char* fmt) {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, fmt, &tm);
  return buf;
}
}  // namespace

std::string utc_stamp() { return format_now("%Y%m%dT%H%M%SZ"); }
std::string utc_iso8601() { return format_now("%Y-%m-%dT%H:%M:%SZ"); }

}  // namespace tajweed::cli
