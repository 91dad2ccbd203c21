#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "tajweed/config.hpp"
#include "tajweed/evaluator.hpp"
#include "tajweed/ingest.hpp"
#include "tajweed/model.hpp"
#include "tajweed/tensor_cache.hpp"

namespace tajweed::train {

using eval::EpochMetrics;
using eval::LabelRow;

/// out[i] = 1 / loss_weights[i]. Throws UsageError on a nonpositive weight.
std::array<double, kNumRules> compute_pos_weights(const std::array<double, kNumRules>& loss_weights);

/// Mean over all B x 3 elements of
///   -[pw_j * y * log(sigmoid(z)) + (1 - y) * log(1 - sigmoid(z))],
/// evaluated as (1 - y) z + (1 + (pw_j - 1) y) softplus(-z) so large |z| stays
/// finite. Differentiable; shapes must match and pos_weights has 3 entries.
torch::Tensor weighted_bce_logits(const torch::Tensor& logits, const torch::Tensor& targets,
                                  const torch::Tensor& pos_weights);

struct Predictions {
  std::vector<std::array<double, kNumRules>> probabilities;
  std::vector<LabelRow> verdicts;
};

/// probability = sigmoid(logit), verdict = probability >= threshold.
Predictions predictions_from_logits(const torch::Tensor& logits, double threshold);

/// Eval-mode forward of a B x 224 x 224 x 3 batch.
Predictions predict_batch(model::TajweedNet& net, const torch::Tensor& batch_nhwc, double threshold);

/// Preprocessed clips in memory: one 224 x 224 plane per clip (the channels
/// are identical), plus targets.
struct TensorSet {
  std::vector<std::string> clip_ids;
  torch::Tensor planes;   // N x 224 x 224 float32
  torch::Tensor targets;  // N x 3 float32

  std::int64_t size() const { return static_cast<std::int64_t>(clip_ids.size()); }
  /// B x 3 x 224 x 224 for the given rows.
  torch::Tensor images(const torch::Tensor& index) const;
  std::vector<LabelRow> labels() const;
};

/// Every clip must already be cached; a missing entry is a DataError.
TensorSet load_tensor_set(std::span<const ClipRecord> records, const dsp::TensorCache& cache);
TensorSet make_tensor_set(std::span<const dsp::SpectrogramTensor> tensors, std::span<const RuleLabels> labels);

struct SetEvaluation {
  double loss = 0.0;
  std::array<double, kNumRules> accuracy{};
  Predictions predictions;
};

/// Eval-mode pass in fixed order and fixed batch size (results are
/// reproducible bit-for-bit for a given checkpoint).
SetEvaluation evaluate_set(model::TajweedNet& net, const TensorSet& set, const torch::Tensor& pos_weights,
                           double threshold, int batch_size);

struct TrainOptions {
  /// Where metrics.csv, checkpoints and curves go. Empty = keep nothing on disk.
  std::filesystem::path run_dir;
  /// Called after every epoch.
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Merged into the metadata of every checkpoint written.
  nlohmann::json checkpoint_extra = nlohmann::json::object();
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  int best_epoch = 0;
  double best_test_loss = 0.0;
  std::string final_checkpoint_id;
  std::string best_checkpoint_id;
};

/// Adam on weighted_bce_logits with pos_weights = 1 / loss_weights. Batches
/// are reshuffled every epoch from cfg.seed. After each epoch: mean train
/// loss, eval-mode test loss and per-rule test accuracy. Writes
/// run_dir/{metrics.csv, checkpoint_best, checkpoint_final, curves.*}.
/// A non-finite loss aborts with RuntimeFailure and writes
/// run_dir/nonfinite_batch.json listing the offending clip ids.
TrainResult train(model::TajweedNet& net, const TensorSet& train_set, const TensorSet& test_set,
                  const TrainConfig& cfg, const TrainOptions& options = {});

/// Sets the torch seed and requests deterministic kernels.
void make_deterministic(std::uint64_t seed);

}  // namespace tajweed::train
