#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tajweed/rules.hpp"

namespace tajweed {

/// Per-rule correctness: 1 = recited correctly, 0 = mistake.
struct RuleLabels {
  std::uint8_t separate_stretching = 0;
  std::uint8_t tight_noon = 0;
  std::uint8_t hide = 0;

  std::array<std::uint8_t, kNumRules> as_array() const {
    return {separate_stretching, tight_noon, hide};
  }
  static RuleLabels from_array(const std::array<std::uint8_t, kNumRules>& a) {
    return {a[0], a[1], a[2]};
  }
  /// 3-bit stratum key, bit 2 = separate_stretching ... bit 0 = hide.
  int triple() const { return (separate_stretching << 2) | (tight_noon << 1) | hide; }

  bool operator==(const RuleLabels&) const = default;
};

struct ClipRecord {
  std::string clip_id;     // e.g. "S22_6"
  std::string speaker_id;  // clip_id up to the first underscore
  std::filesystem::path audio_path;
  RuleLabels labels;
  bool imputed = false;  // a missing label was filled in during ingest

  bool operator==(const ClipRecord&) const = default;
};

struct DatasetSplit {
  std::vector<ClipRecord> train;
  std::vector<ClipRecord> test;
  std::uint64_t seed = 0;
};

struct IngestOptions {
  /// Drop clips whose labels needed imputation instead of keeping them flagged.
  bool exclude_imputed = false;
  /// Check the RIFF/WAVE header of every audio file. When off, only the
  /// file's existence is checked and bad audio surfaces when the clip is read.
  bool check_audio = true;
  /// Fully decode every WAV instead of only checking the RIFF/WAVE header.
  bool decode_audio = false;
};

/// Known QDAT defect: this clip has an empty tight_noon cell; every other
/// recording by the same speaker is labelled 1.
inline constexpr std::string_view kImputedClip = "S22_6";

std::string speaker_of(std::string_view clip_id);

/// Reads `labels_file` (CSV header clip_id,separate_stretching,tight_noon,hide)
/// and resolves audio as <root_dir>/audio/<clip_id>.wav. Rows keep file order.
/// Throws DataError for a missing/undecodable audio file (naming the clip),
/// a label that is not 0/1 (naming the row), duplicates, or an empty label
/// anywhere except the known defect.
std::vector<ClipRecord> load_corpus(const std::filesystem::path& root_dir,
                                    const std::filesystem::path& labels_file,
                                    const IngestOptions& options = {});

/// Convenience: <root>/labels.csv.
std::vector<ClipRecord> load_corpus(const std::filesystem::path& root_dir,
                                    const IngestOptions& options = {});

/// Fraction of label 0 per rule.
std::array<double, kNumRules> class_distribution(std::span<const ClipRecord> records);

/// Deterministic 80/20 split stratified on the joint label triple.
/// Train size is floor(0.8 N); each stratum's train count is the floor or
/// ceiling of 80% of its size. A missing seed is a UsageError.
DatasetSplit split_dataset(std::span<const ClipRecord> records, std::optional<std::uint64_t> seed);

/// "clip_id,subset" CSV: header, then train rows, then test rows, each in corpus order.
std::string split_manifest_csv(const DatasetSplit& split);
void write_split_manifest(const DatasetSplit& split, const std::filesystem::path& path);

/// Rebuilds a split from a manifest and the corpus it was made from.
DatasetSplit apply_split_manifest(std::span<const ClipRecord> records,
                                  const std::filesystem::path& manifest_path);

/// Writes records back in the labels.csv layout.
void write_labels_csv(std::span<const ClipRecord> records, const std::filesystem::path& path);

}  // namespace tajweed
