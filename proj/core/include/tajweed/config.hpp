#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tajweed/dsp.hpp"
#include "tajweed/rules.hpp"

namespace tajweed {

enum class SePlacement {
  kNone,
  kAfterPool,
  kBeforePool,  // reserved name; requesting it is an error
};

std::string_view to_string(SePlacement p);
SePlacement parse_se_placement(std::string_view s);

struct ModelConfig {
  std::string backbone = "efficientnet_b0";
  /// Load ImageNet weights for the backbone from `pretrained_weights`.
  bool pretrained = true;
  std::string pretrained_weights = "weights/efficientnet_b0_imagenet.tjw";
  int feature_channels = 1280;
  SePlacement se_placement = SePlacement::kAfterPool;
  int se_reduction = 16;
  double dropout_p = 0.7;
  int n_outputs = 3;

  void validate() const;
  int se_hidden() const { return feature_channels / se_reduction; }
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  std::string optimizer = "adam";
  double learning_rate = 1e-4;
  int epochs = 40;
  int batch_size = 16;
  std::array<double, kNumRules> loss_weights{1.0, 0.19, 0.95};
  std::uint64_t seed = 42;
  double threshold = 0.5;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Locations used by the CLI; not hyperparameters.
struct PathsConfig {
  std::string data_root = "data/qdat";
  std::string cache_dir = "cache/tensors";
  std::string runs_dir = "runs";
  std::string split_manifest = "splits/split.csv";

  bool operator==(const PathsConfig&) const = default;
};

/// The flat key-value document: every field of the four structs above at
/// top level, keyed by its field name.
struct PipelineConfig {
  dsp::DspConfig dsp;
  ModelConfig model;
  TrainConfig train;
  PathsConfig paths;

  nlohmann::json to_json() const;
  /// Missing keys keep defaults; unknown keys are a UsageError.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies "key=value" overrides; the value is parsed as JSON when it can
  /// be, otherwise taken as a string.
  void apply_overrides(const std::vector<std::string>& assignments);

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

}  // namespace tajweed
