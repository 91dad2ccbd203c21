#include "tajweed/model.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tajweed/error.hpp"
#include "tajweed/hashing.hpp"
#include "tajweed/log.hpp"

namespace tajweed::model {
namespace nn = torch::nn;

namespace {

// ---------------------------------------------------------------------------
// EfficientNet-B0 building blocks (torchvision layout).
// ---------------------------------------------------------------------------

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kStochasticDepth = 0.2;

// Sequential with a concrete forward, so it can be nested in another Sequential.
class ChainImpl : public nn::SequentialImpl {
 public:
  using nn::SequentialImpl::SequentialImpl;
  torch::Tensor forward(torch::Tensor x) { return nn::SequentialImpl::forward(x); }
};
TORCH_MODULE(Chain);

Chain conv_norm_act(int in, int out, int kernel, int stride = 1, int groups = 1, bool activation = true) {
  Chain s;
  s->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel)
                              .stride(stride)
                              .padding((kernel - 1) / 2)
                              .groups(groups)
                              .bias(false)));
  s->push_back(nn::BatchNorm2d(nn::BatchNorm2dOptions(out).eps(kBnEps).momentum(kBnMomentum)));
  if (activation) s->push_back(nn::SiLU());
  return s;
}

// The squeeze-and-excitation unit inside each MBConv block (SiLU, 1x1 convs).
class SqueezeExcitationImpl : public nn::Module {
 public:
  SqueezeExcitationImpl(int channels, int squeeze) {
    fc1 = register_module("fc1", nn::Conv2d(nn::Conv2dOptions(channels, squeeze, 1)));
    fc2 = register_module("fc2", nn::Conv2d(nn::Conv2dOptions(squeeze, channels, 1)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto s = torch::adaptive_avg_pool2d(x, {1, 1});
    s = torch::sigmoid(fc2(torch::silu(fc1(s))));
    return s * x;
  }

  nn::Conv2d fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(SqueezeExcitation);

class MBConvImpl : public nn::Module {
 public:
  MBConvImpl(int expand_ratio, int kernel, int stride, int in, int out, double drop_prob)
      : use_residual_(stride == 1 && in == out), drop_prob_(drop_prob) {
    const int expanded = in * expand_ratio;
    block = Chain();
    if (expanded != in) block->push_back(conv_norm_act(in, expanded, 1));
    block->push_back(conv_norm_act(expanded, expanded, kernel, stride, expanded));
    block->push_back(SqueezeExcitation(expanded, std::max(1, in / 4)));
    block->push_back(conv_norm_act(expanded, out, 1, 1, 1, /*activation=*/false));
    register_module("block", block);
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = block->forward(x);
    if (!use_residual_) return y;
    if (is_training() && drop_prob_ > 0.0) {
      const double survival = 1.0 - drop_prob_;
      auto noise = torch::empty({y.size(0), 1, 1, 1}, y.options()).bernoulli_(survival);
      y = y * noise.div_(survival);
    }
    return y + x;
  }

  Chain block{nullptr};

 private:
  bool use_residual_;
  double drop_prob_;
};
TORCH_MODULE(MBConv);

struct StageSpec {
  int expand_ratio, kernel, stride, in, out, layers;
};

constexpr std::array<StageSpec, 7> kStages{{
    {1, 3, 1, 32, 16, 1},
    {6, 3, 2, 16, 24, 2},
    {6, 5, 2, 24, 40, 2},
    {6, 3, 2, 40, 80, 3},
    {6, 5, 1, 80, 112, 3},
    {6, 5, 2, 112, 192, 4},
    {6, 3, 1, 192, 320, 1},
}};

void init_backbone(nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& mod : m.modules(/*include_self=*/true)) {
    if (auto* conv = mod->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* bn = mod->as<nn::BatchNorm2d>()) {
      nn::init::ones_(bn->weight);
      nn::init::zeros_(bn->bias);
    }
  }
}

void init_fan_in_uniform(nn::Linear& layer) {
  torch::NoGradGuard no_grad;
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer->options.in_features()));
  layer->weight.uniform_(-bound, bound);
  layer->bias.zero_();
}

// ---------------------------------------------------------------------------
// Weight container I/O.
// ---------------------------------------------------------------------------

constexpr std::array<char, 8> kMagic{'T', 'J', 'W', 'C', 'K', 'P', 'T', '1'};

enum class DType : std::uint8_t { kF32 = 0, kI64 = 1 };

class ByteWriter {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  std::vector<std::byte>& bytes() { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::byte> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::byte> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError(source_ + ": truncated weight file");
  }
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
  std::string source_;
};

nlohmann::json model_config_json(const ModelConfig& c) {
  return {
      {"backbone", c.backbone},
      {"pretrained", c.pretrained},
      {"pretrained_weights", c.pretrained_weights},
      {"feature_channels", c.feature_channels},
      {"se_placement", std::string(to_string(c.se_placement))},
      {"se_reduction", c.se_reduction},
      {"dropout_p", c.dropout_p},
      {"n_outputs", c.n_outputs},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    j.at("backbone").get_to(c.backbone);
    j.at("pretrained").get_to(c.pretrained);
    j.at("pretrained_weights").get_to(c.pretrained_weights);
    j.at("feature_channels").get_to(c.feature_channels);
    c.se_placement = parse_se_placement(j.at("se_placement").get<std::string>());
    j.at("se_reduction").get_to(c.se_reduction);
    j.at("dropout_p").get_to(c.dropout_p);
    j.at("n_outputs").get_to(c.n_outputs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint model_config: ") + e.what());
  }
  return c;
}

std::map<std::string, torch::Tensor> state_of(TajweedNet& net) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : net->named_parameters(true)) out[p.key()] = p.value();
  for (const auto& b : net->named_buffers(true)) out[b.key()] = b.value();
  return out;
}

void copy_into(const std::string& source, const std::string& name, torch::Tensor& dst,
               const torch::Tensor& src) {
  if (dst.sizes() != src.sizes()) {
    throw DataError(source + ": tensor '" + name + "' has shape " + c10::str(src.sizes()) +
                    ", model expects " + c10::str(dst.sizes()));
  }
  if (dst.scalar_type() != src.scalar_type()) {
    throw DataError(source + ": tensor '" + name + "' has the wrong dtype");
  }
  torch::NoGradGuard no_grad;
  dst.copy_(src);
}

}  // namespace

// ---------------------------------------------------------------------------
// Channel gate.
// ---------------------------------------------------------------------------

SEBlockParams SEBlockParams::zeros(int channels, int hidden) {
  SEBlockParams p;
  p.channels = channels;
  p.hidden = hidden;
  p.reduce_weight.assign(static_cast<std::size_t>(hidden) * channels, 0.0f);
  p.reduce_bias.assign(hidden, 0.0f);
  p.expand_weight.assign(static_cast<std::size_t>(channels) * hidden, 0.0f);
  p.expand_bias.assign(channels, 0.0f);
  return p;
}

void SEBlockParams::validate() const {
  const auto c = static_cast<std::size_t>(channels), h = static_cast<std::size_t>(hidden);
  if (channels <= 0 || hidden <= 0 || reduce_weight.size() != h * c || reduce_bias.size() != h ||
      expand_weight.size() != c * h || expand_bias.size() != c) {
    throw DataError("SEBlockParams: shapes do not match channels=" + std::to_string(channels) +
                    " hidden=" + std::to_string(hidden));
  }
  for (const auto* v : {&reduce_weight, &reduce_bias, &expand_weight, &expand_bias}) {
    for (float x : *v) {
      if (!std::isfinite(x)) throw DataError("SEBlockParams: non-finite parameter");
    }
  }
}

ChannelGateImpl::ChannelGateImpl(int channels, int hidden) {
  reduce = register_module("reduce", nn::Linear(channels, hidden));
  expand = register_module("expand", nn::Linear(hidden, channels));
}

torch::Tensor ChannelGateImpl::gates(const torch::Tensor& v) {
  return torch::sigmoid(expand(torch::relu(reduce(v))));
}

torch::Tensor ChannelGateImpl::forward(const torch::Tensor& v) { return v * gates(v); }

void ChannelGateImpl::load_params(const SEBlockParams& p) {
  p.validate();
  if (p.channels != reduce->options.in_features() || p.hidden != reduce->options.out_features()) {
    throw DataError("ChannelGate::load_params: size mismatch");
  }
  torch::NoGradGuard no_grad;
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto copy = [&](torch::Tensor& dst, const std::vector<float>& src) {
    dst.copy_(torch::from_blob(const_cast<float*>(src.data()), dst.sizes(), opts));
  };
  copy(reduce->weight, p.reduce_weight);
  copy(reduce->bias, p.reduce_bias);
  copy(expand->weight, p.expand_weight);
  copy(expand->bias, p.expand_bias);
}

SEBlockParams ChannelGateImpl::params() const {
  SEBlockParams p;
  p.channels = static_cast<int>(reduce->options.in_features());
  p.hidden = static_cast<int>(reduce->options.out_features());
  auto take = [](const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
  };
  p.reduce_weight = take(reduce->weight);
  p.reduce_bias = take(reduce->bias);
  p.expand_weight = take(expand->weight);
  p.expand_bias = take(expand->bias);
  return p;
}

std::vector<double> se_gate(std::span<const double> v, const SEBlockParams& p) {
  if (v.size() != static_cast<std::size_t>(p.channels)) {
    throw DataError("se_gate: vector has " + std::to_string(v.size()) + " entries, params expect " +
                    std::to_string(p.channels));
  }
  ChannelGate gate(p.channels, p.hidden);
  gate->load_params(p);
  gate->to(torch::kFloat64);
  torch::NoGradGuard no_grad;
  auto in = torch::from_blob(const_cast<double*>(v.data()), {1, p.channels}, torch::kFloat64);
  auto out = gate->forward(in).contiguous();
  return {out.data_ptr<double>(), out.data_ptr<double>() + out.numel()};
}

// ---------------------------------------------------------------------------
// Network.
// ---------------------------------------------------------------------------

nn::Sequential make_efficientnet_b0_features() {
  nn::Sequential features;
  features->push_back(conv_norm_act(3, 32, 3, 2));

  int total_blocks = 0;
  for (const auto& s : kStages) total_blocks += s.layers;
  int block_id = 0;
  for (const auto& s : kStages) {
    Chain stage;
    for (int i = 0; i < s.layers; ++i) {
      const double drop = kStochasticDepth * block_id / total_blocks;
      stage->push_back(MBConv(s.expand_ratio, s.kernel, i == 0 ? s.stride : 1, i == 0 ? s.in : s.out,
                              s.out, drop));
      ++block_id;
    }
    features->push_back(stage);
  }
  features->push_back(conv_norm_act(320, 1280, 1));
  return features;
}

TajweedNetImpl::TajweedNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  features = register_module("features", make_efficientnet_b0_features());
  init_backbone(*features);
  if (cfg_.se_placement == SePlacement::kAfterPool) {
    se = register_module("se", ChannelGate(cfg_.feature_channels, cfg_.se_hidden()));
    init_fan_in_uniform(se->reduce);
    init_fan_in_uniform(se->expand);
  }
  dropout = register_module("dropout", nn::Dropout(cfg_.dropout_p));
  head = register_module("head", nn::Linear(cfg_.feature_channels, cfg_.n_outputs));
  init_fan_in_uniform(head);
}

torch::Tensor TajweedNetImpl::pooled_features(const torch::Tensor& x_nchw) {
  return torch::adaptive_avg_pool2d(features->forward(x_nchw), {1, 1}).flatten(1);
}

torch::Tensor TajweedNetImpl::classify(const torch::Tensor& pooled) {
  auto v = se ? se->forward(pooled) : pooled;
  return head(dropout(v));
}

torch::Tensor TajweedNetImpl::forward_nchw(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != 224 || x.size(3) != 224) {
    throw DataError("forward: expected B x 3 x 224 x 224, got " + c10::str(x.sizes()));
  }
  return classify(pooled_features(x));
}

torch::Tensor TajweedNetImpl::forward(const torch::Tensor& batch_nhwc) {
  const auto& x = batch_nhwc;
  if (x.dim() != 4 || x.size(1) != 224 || x.size(2) != 224 || x.size(3) != 3) {
    throw DataError("forward: expected batches of 224x224x3 tensors (B x 224 x 224 x 3), got " +
                    c10::str(x.sizes()));
  }
  return forward_nchw(x.permute({0, 3, 1, 2}).contiguous());
}

ParameterCensus census(TajweedNet& net) {
  ParameterCensus c;
  for (const auto& p : net->named_parameters(true)) {
    const auto n = p.value().numel();
    c.total += n;
    if (p.value().requires_grad()) c.trainable += n;
    if (p.key().starts_with("features.")) c.backbone += n;
    else if (p.key().starts_with("se.")) c.se += n;
    else if (p.key().starts_with("head.")) c.head += n;
  }
  return c;
}

TajweedNet build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  torch::manual_seed(seed);
  TajweedNet net(cfg);
  if (cfg.pretrained) {
    if (!std::filesystem::is_regular_file(cfg.pretrained_weights)) {
      throw DataError("pretrained backbone weights not found at '" + cfg.pretrained_weights +
                      "' (torchvision EfficientNet_B0_Weights.IMAGENET1K_V1, exported with "
                      "tools/export_backbone_weights.py); set pretrained=false to train from scratch");
    }
    load_backbone_weights(net, cfg.pretrained_weights);
  }
  for (auto& p : net->parameters()) p.set_requires_grad(true);
  return net;
}

torch::Tensor to_batch(std::span<const dsp::SpectrogramTensor> tensors) {
  constexpr auto H = dsp::SpectrogramTensor::kHeight;
  constexpr auto W = dsp::SpectrogramTensor::kWidth;
  constexpr auto C = dsp::SpectrogramTensor::kChannels;
  auto batch = torch::empty({static_cast<std::int64_t>(tensors.size()), H, W, C}, torch::kFloat32);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].data.size() != dsp::SpectrogramTensor::kSize) {
      throw DataError("to_batch: tensor " + tensors[i].clip_id + " is not 224x224x3");
    }
    std::memcpy(batch[static_cast<std::int64_t>(i)].data_ptr<float>(), tensors[i].data.data(),
                dsp::SpectrogramTensor::kSize * sizeof(float));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Weight files.
// ---------------------------------------------------------------------------

std::string write_weight_file(const std::filesystem::path& path, const nlohmann::json& metadata,
                              const std::map<std::string, torch::Tensor>& tensors) {
  ByteWriter w;
  w.put_bytes(kMagic.data(), kMagic.size());
  w.put(kCheckpointVersion);
  const std::string meta = metadata.dump();
  w.put(static_cast<std::uint64_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  w.put(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().cpu().contiguous();
    DType dtype;
    if (t.scalar_type() == torch::kFloat32) dtype = DType::kF32;
    else if (t.scalar_type() == torch::kInt64) dtype = DType::kI64;
    else throw RuntimeFailure("write_weight_file: unsupported dtype for " + name);
    w.put(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(static_cast<std::uint8_t>(dtype));
    w.put(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.put(static_cast<std::int64_t>(d));
    w.put_bytes(t.data_ptr(), static_cast<std::size_t>(t.numel()) * t.element_size());
  }
  Sha256 h;
  h.update(w.bytes());
  const Digest digest = h.finish();
  w.put_bytes(digest.data(), digest.size());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw RuntimeFailure("short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return to_hex(digest);
}

WeightFile read_weight_file(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file " + source);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto bytes = std::as_bytes(std::span(raw));
  if (bytes.size() < kMagic.size() + 4 + 32) throw DataError(source + ": not a weight file");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DataError(source + ": bad magic, not a weight file");
  }

  const auto body = bytes.first(bytes.size() - 32);
  Sha256 h;
  h.update(body);
  const Digest digest = h.finish();
  if (std::memcmp(digest.data(), bytes.data() + body.size(), 32) != 0) {
    throw DataError(source + ": checksum mismatch, file is corrupt or was modified");
  }

  ByteReader r(body, source);
  r.take(kMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(source + ": format version " + std::to_string(version) + ", this build reads version " +
                    std::to_string(kCheckpointVersion));
  }
  WeightFile wf;
  const auto meta_len = r.get<std::uint64_t>();
  const auto meta = r.take(meta_len);
  wf.metadata = nlohmann::json::parse(reinterpret_cast<const char*>(meta.data()),
                                      reinterpret_cast<const char*>(meta.data()) + meta.size(), nullptr, false);
  if (wf.metadata.is_discarded()) throw DataError(source + ": metadata block is not JSON");

  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const auto name_bytes = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
    const auto dtype = static_cast<DType>(r.get<std::uint8_t>());
    const auto ndim = r.get<std::uint32_t>();
    if (ndim > 8) throw DataError(source + ": tensor '" + name + "' has implausible rank");
    std::vector<std::int64_t> dims(ndim);
    std::int64_t numel = 1;
    for (auto& d : dims) {
      d = r.get<std::int64_t>();
      if (d < 0 || d > (std::int64_t{1} << 31)) throw DataError(source + ": tensor '" + name + "' has a bad shape");
      numel *= d;
    }
    torch::ScalarType st;
    std::size_t elem;
    switch (dtype) {
      case DType::kF32:
        st = torch::kFloat32;
        elem = 4;
        break;
      case DType::kI64:
        st = torch::kInt64;
        elem = 8;
        break;
      default:
        throw DataError(source + ": tensor '" + name + "' has unknown dtype");
    }
    const auto data = r.take(static_cast<std::size_t>(numel) * elem);
    auto t = torch::empty(dims, st);
    std::memcpy(t.data_ptr(), data.data(), data.size());
    wf.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw DataError(source + ": trailing bytes after tensor table");
  wf.checksum = to_hex(digest);
  return wf;
}

std::string save_checkpoint(TajweedNet& net, const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json meta = {
      {"kind", "checkpoint"},
      {"format_version", kCheckpointVersion},
      {"model_config", model_config_json(net->config())},
      {"init", {{"backbone", net->config().pretrained ? "imagenet" : "kaiming_normal_fan_out"},
                {"se_and_head", "uniform_fan_in_weights_zero_bias"}}},
  };
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) meta[k] = v;
  }
  return write_weight_file(path, meta, state_of(net));
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  WeightFile wf = read_weight_file(path);
  if (wf.metadata.value("kind", "") != "checkpoint" || !wf.metadata.contains("model_config")) {
    throw DataError(path.string() + ": not a model checkpoint");
  }
  LoadedModel lm;
  lm.config = model_config_from_json(wf.metadata.at("model_config"));
  ModelConfig build_cfg = lm.config;
  build_cfg.pretrained = false;  // every tensor comes from the file
  lm.net = TajweedNet(build_cfg);

  auto state = state_of(lm.net);
  for (auto& [name, dst] : state) {
    auto it = wf.tensors.find(name);
    if (it == wf.tensors.end()) throw DataError(path.string() + ": missing tensor '" + name + "'");
    copy_into(path.string(), name, dst, it->second);
  }
  for (const auto& [name, t] : wf.tensors) {
    if (!state.contains(name)) throw DataError(path.string() + ": unexpected tensor '" + name + "'");
  }
  lm.net->eval();
  lm.checksum = wf.checksum;
  lm.metadata = std::move(wf.metadata);
  return lm;
}

void load_backbone_weights(TajweedNet& net, const std::filesystem::path& path) {
  WeightFile wf = read_weight_file(path);
  auto state = state_of(net);
  std::size_t loaded = 0;
  for (auto& [name, dst] : state) {
    if (!name.starts_with("features.")) continue;
    auto it = wf.tensors.find(name);
    if (it == wf.tensors.end()) throw DataError(path.string() + ": backbone tensor '" + name + "' missing");
    copy_into(path.string(), name, dst, it->second);
    ++loaded;
  }
  log::info(c10::str("model: loaded ", loaded, " backbone tensors from ", path.string()));
}

}  // namespace tajweed::model
