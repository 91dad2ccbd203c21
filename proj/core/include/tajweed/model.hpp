#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "tajweed/config.hpp"
#include "tajweed/dsp.hpp"

namespace tajweed::model {

// ---------------------------------------------------------------------------
// Channel gate applied to the pooled feature vector.
// ---------------------------------------------------------------------------

/// Weights of the squeeze-and-excitation gate, row-major [out][in].
struct SEBlockParams {
  int channels = 1280;
  int hidden = 80;
  std::vector<float> reduce_weight;  // hidden x channels
  std::vector<float> reduce_bias;    // hidden
  std::vector<float> expand_weight;  // channels x hidden
  std::vector<float> expand_bias;    // channels

  static SEBlockParams zeros(int channels, int hidden);
  /// Throws DataError on wrong sizes or non-finite values.
  void validate() const;
};

/// out = v * sigmoid(expand(relu(reduce(v)))), operating on B x C.
class ChannelGateImpl : public torch::nn::Module {
 public:
  ChannelGateImpl(int channels, int hidden);

  torch::Tensor forward(const torch::Tensor& v);
  torch::Tensor gates(const torch::Tensor& v);

  void load_params(const SEBlockParams& p);
  SEBlockParams params() const;

  torch::nn::Linear reduce{nullptr};
  torch::nn::Linear expand{nullptr};
};
TORCH_MODULE(ChannelGate);

/// Gated vector for a single input, computed in double precision through
/// ChannelGate::forward.
std::vector<double> se_gate(std::span<const double> v, const SEBlockParams& p);

// ---------------------------------------------------------------------------
// Backbone and classifier.
// ---------------------------------------------------------------------------

/// EfficientNet-B0 convolutional trunk, N x 3 x 224 x 224 -> N x 1280 x 7 x 7.
/// Module and parameter names follow torchvision's `features` so exported
/// ImageNet weights load by name.
torch::nn::Sequential make_efficientnet_b0_features();

class TajweedNetImpl : public torch::nn::Module {
 public:
  explicit TajweedNetImpl(ModelConfig cfg);

  /// Batch in model layout B x 224 x 224 x 3 (mel x time x channel) -> B x 3 logits.
  torch::Tensor forward(const torch::Tensor& batch_nhwc);
  /// Same network on B x 3 x 224 x 224.
  torch::Tensor forward_nchw(const torch::Tensor& x);
  /// Globally pooled backbone features, B x 1280.
  torch::Tensor pooled_features(const torch::Tensor& x_nchw);
  /// Logits from pooled features (gate, dropout, linear head).
  torch::Tensor classify(const torch::Tensor& pooled);

  const ModelConfig& config() const { return cfg_; }

  torch::nn::Sequential features{nullptr};
  ChannelGate se{nullptr};
  torch::nn::Dropout dropout{nullptr};
  torch::nn::Linear head{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(TajweedNet);

struct ParameterCensus {
  std::int64_t backbone = 0;
  std::int64_t se = 0;
  std::int64_t head = 0;
  std::int64_t total = 0;
  std::int64_t trainable = 0;
};

ParameterCensus census(TajweedNet& net);

/// Builds the network. With cfg.pretrained the backbone is loaded from
/// cfg.pretrained_weights (see tools/export_backbone_weights.py); a missing
/// file is a DataError naming that source. Otherwise the backbone gets
/// torchvision's initialisation. Gate and head weights are U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)) with zero biases. All parameters are trainable.
TajweedNet build_model(const ModelConfig& cfg, std::uint64_t seed = 0);

/// Stacks tensors into B x 224 x 224 x 3.
torch::Tensor to_batch(std::span<const dsp::SpectrogramTensor> tensors);

// ---------------------------------------------------------------------------
// Weight containers.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned container: magic "TJWCKPT1", u32 version, u64 length + JSON
/// metadata (model_config, init), u32 tensor count, then per tensor
/// {u32 name length, name, u8 dtype (0 f32, 1 i64), u32 ndim, i64 dims, LE
/// data}, and a trailing SHA-256 of all preceding bytes.
struct WeightFile {
  nlohmann::json metadata;
  std::map<std::string, torch::Tensor> tensors;
  std::string checksum;  // hex SHA-256 trailer
};

WeightFile read_weight_file(const std::filesystem::path& path);
/// Returns the checksum it wrote.
std::string write_weight_file(const std::filesystem::path& path, const nlohmann::json& metadata,
                              const std::map<std::string, torch::Tensor>& tensors);

/// Saves every parameter and buffer plus the model config. `extra` is merged
/// into the metadata. Returns the checksum (model id).
std::string save_checkpoint(TajweedNet& net, const std::filesystem::path& path,
                            const nlohmann::json& extra = {});

struct LoadedModel {
  TajweedNet net{nullptr};
  ModelConfig config;
  std::string checksum;
  nlohmann::json metadata;
};

/// Rebuilds the model from the config stored in the file (never the
/// caller's) and restores every tensor bit-exactly. Refuses unknown
/// versions, checksum mismatches, and missing/extra/misshapen tensors.
LoadedModel load_checkpoint(const std::filesystem::path& path);

/// Copies backbone tensors (names starting with "features.") into the model.
void load_backbone_weights(TajweedNet& net, const std::filesystem::path& path);

}  // namespace tajweed::model
