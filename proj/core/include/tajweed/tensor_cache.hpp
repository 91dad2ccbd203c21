#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tajweed/dsp.hpp"

namespace tajweed {
struct ClipRecord;
}

namespace tajweed::dsp {

/// `.mst` layout: ASCII header line "224 224 3\n" followed by
/// 224*224*3 little-endian float32 values in HWC order.
void write_tensor_file(const std::filesystem::path& path, const SpectrogramTensor& t);
SpectrogramTensor read_tensor_file(const std::filesystem::path& path);

/// On-disk cache of preprocessed clips, one file per clip named
/// <clip_id>.<cfg-hash>.mst. Safe for concurrent insert-if-absent: files are
/// written under a unique temporary name and hard-linked into place.
class TensorCache {
 public:
  TensorCache(std::filesystem::path dir, DspConfig cfg);

  const std::filesystem::path& dir() const { return dir_; }
  const DspConfig& config() const { return cfg_; }
  std::filesystem::path path_for(const std::string& clip_id) const;

  bool contains(const std::string& clip_id) const;
  std::optional<SpectrogramTensor> load(const std::string& clip_id) const;
  /// Returns false if an entry already existed (the existing file is kept).
  bool insert(const SpectrogramTensor& t) const;

  /// Loads the cached tensor or preprocesses the clip and stores it.
  SpectrogramTensor get_or_compute(const ClipRecord& record, bool* was_hit = nullptr) const;

 private:
  std::filesystem::path dir_;
  DspConfig cfg_;
  std::string cfg_hash_;
};

}  // namespace tajweed::dsp
