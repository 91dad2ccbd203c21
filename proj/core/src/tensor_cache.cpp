#include "tajweed/tensor_cache.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include "tajweed/error.hpp"
#include "tajweed/ingest.hpp"

namespace tajweed::dsp {
namespace {

constexpr std::string_view kHeaderLine = "224 224 3\n";

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const SpectrogramTensor& t) {
  if (t.data.size() != SpectrogramTensor::kSize) throw DataError("tensor has wrong element count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write tensor file " + path.string());
  out.write(kHeaderLine.data(), static_cast<std::streamsize>(kHeaderLine.size()));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw RuntimeFailure("short write on " + path.string());
}

SpectrogramTensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::size_t h = 0, w = 0, c = 0;
  if (!(hs >> h >> w >> c) || h != SpectrogramTensor::kHeight || w != SpectrogramTensor::kWidth ||
      c != SpectrogramTensor::kChannels) {
    throw DataError(path.string() + ": bad shape header '" + header + "', expected '224 224 3'");
  }
  SpectrogramTensor t;
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float)) ||
      in.peek() != std::char_traits<char>::eof()) {
    throw DataError(path.string() + ": payload size does not match 224x224x3 float32");
  }
  for (float v : t.data) {
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value");
  }
  return t;
}

TensorCache::TensorCache(std::filesystem::path dir, DspConfig cfg)
    : dir_(std::move(dir)), cfg_(std::move(cfg)), cfg_hash_(cfg_.hash()) {
  cfg_.validate();
  std::filesystem::create_directories(dir_);
}

std::filesystem::path TensorCache::path_for(const std::string& clip_id) const {
  return dir_ / (clip_id + "." + cfg_hash_ + ".mst");
}

bool TensorCache::contains(const std::string& clip_id) const {
  return std::filesystem::is_regular_file(path_for(clip_id));
}

std::optional<SpectrogramTensor> TensorCache::load(const std::string& clip_id) const {
  const auto p = path_for(clip_id);
  if (!std::filesystem::is_regular_file(p)) return std::nullopt;
  SpectrogramTensor t = read_tensor_file(p);
  t.clip_id = clip_id;
  return t;
}

bool TensorCache::insert(const SpectrogramTensor& t) const {
  if (t.clip_id.empty()) throw UsageError("TensorCache::insert: tensor has no clip id");
  const auto final_path = path_for(t.clip_id);
  if (std::filesystem::exists(final_path)) return false;

  static std::atomic<unsigned long> counter{0};
  std::ostringstream tmp_name;
  tmp_name << final_path.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
           << '.' << counter.fetch_add(1);
  const auto tmp = dir_ / tmp_name.str();
  write_tensor_file(tmp, t);
  std::error_code ec;
  std::filesystem::create_hard_link(tmp, final_path, ec);
  std::filesystem::remove(tmp);
  if (ec == std::errc::file_exists) return false;
  if (ec) throw RuntimeFailure("cannot publish cache entry " + final_path.string() + ": " + ec.message());
  return true;
}

SpectrogramTensor TensorCache::get_or_compute(const ClipRecord& record, bool* was_hit) const {
  if (auto cached = load(record.clip_id)) {
    if (was_hit) *was_hit = true;
    return std::move(*cached);
  }
  if (was_hit) *was_hit = false;
  SpectrogramTensor t = preprocess_clip(record, cfg_);
  insert(t);
  return t;
}

}  // namespace tajweed::dsp
