#include "tajweed/config.hpp"

#include <cmath>
#include <fstream>

#include "tajweed/error.hpp"

namespace tajweed {

std::string_view to_string(SePlacement p) {
  switch (p) {
    case SePlacement::kNone:
      return "none";
    case SePlacement::kAfterPool:
      return "after_pool";
    case SePlacement::kBeforePool:
      return "before_pool";
  }
  return "?";
}

SePlacement parse_se_placement(std::string_view s) {
  if (s == "none") return SePlacement::kNone;
  if (s == "after_pool") return SePlacement::kAfterPool;
  if (s == "before_pool") return SePlacement::kBeforePool;
  throw UsageError("unknown se_placement '" + std::string(s) + "' (none | after_pool)");
}

void ModelConfig::validate() const {
  if (backbone != "efficientnet_b0") throw UsageError("unsupported backbone '" + backbone + "'");
  if (feature_channels != 1280) throw UsageError("efficientnet_b0 produces 1280 feature channels");
  if (se_reduction <= 0 || feature_channels % se_reduction != 0) {
    throw UsageError("feature_channels must be divisible by se_reduction");
  }
  if (se_placement == SePlacement::kBeforePool) {
    throw UsageError("se_placement=before_pool is reserved and not implemented");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw UsageError("dropout_p must be in [0, 1)");
  if (n_outputs != static_cast<int>(kNumRules)) throw UsageError("n_outputs must be 3");
}

void TrainConfig::validate() const {
  if (optimizer != "adam") throw UsageError("only the adam optimizer is supported");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  for (double w : loss_weights) {
    if (!(w > 0.0) || !std::isfinite(1.0 / w)) throw UsageError("loss_weights must all be positive");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("threshold must be in (0, 1)");
}

nlohmann::json PipelineConfig::to_json() const {
  return {
      // dsp
      {"target_rate_hz", dsp.target_rate_hz},
      {"n_fft", dsp.n_fft},
      {"hop", dsp.hop},
      {"n_mels", dsp.n_mels},
      {"f_min_hz", dsp.f_min_hz},
      {"f_max_hz", dsp.f_max_hz},
      {"log_offset", dsp.log_offset},
      {"out_frames", dsp.out_frames},
      {"window", dsp.window},
      {"spectrum_power", dsp.spectrum_power},
      // model
      {"backbone", model.backbone},
      {"pretrained", model.pretrained},
      {"pretrained_weights", model.pretrained_weights},
      {"feature_channels", model.feature_channels},
      {"se_placement", std::string(to_string(model.se_placement))},
      {"se_reduction", model.se_reduction},
      {"dropout_p", model.dropout_p},
      {"n_outputs", model.n_outputs},
      // train
      {"optimizer", train.optimizer},
      {"learning_rate", train.learning_rate},
      {"epochs", train.epochs},
      {"batch_size", train.batch_size},
      {"loss_weights", train.loss_weights},
      {"seed", train.seed},
      {"threshold", train.threshold},
      // paths
      {"data_root", paths.data_root},
      {"cache_dir", paths.cache_dir},
      {"runs_dir", paths.runs_dir},
      {"split_manifest", paths.split_manifest},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config must be a flat JSON object");
  PipelineConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
    if (value.is_object()) throw UsageError("config key '" + key + "' must not be nested");
  }
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("target_rate_hz", c.dsp.target_rate_hz);
    get("n_fft", c.dsp.n_fft);
    get("hop", c.dsp.hop);
    get("n_mels", c.dsp.n_mels);
    get("f_min_hz", c.dsp.f_min_hz);
    get("f_max_hz", c.dsp.f_max_hz);
    get("log_offset", c.dsp.log_offset);
    get("out_frames", c.dsp.out_frames);
    get("window", c.dsp.window);
    get("spectrum_power", c.dsp.spectrum_power);

    get("backbone", c.model.backbone);
    get("pretrained", c.model.pretrained);
    get("pretrained_weights", c.model.pretrained_weights);
    get("feature_channels", c.model.feature_channels);
    if (j.contains("se_placement")) c.model.se_placement = parse_se_placement(j.at("se_placement").get<std::string>());
    get("se_reduction", c.model.se_reduction);
    get("dropout_p", c.model.dropout_p);
    get("n_outputs", c.model.n_outputs);

    get("optimizer", c.train.optimizer);
    get("learning_rate", c.train.learning_rate);
    get("epochs", c.train.epochs);
    get("batch_size", c.train.batch_size);
    get("loss_weights", c.train.loss_weights);
    get("seed", c.train.seed);
    get("threshold", c.train.threshold);

    get("data_root", c.paths.data_root);
    get("cache_dir", c.paths.cache_dir);
    get("runs_dir", c.paths.runs_dir);
    get("split_manifest", c.paths.split_manifest);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write config " + path.string());
  out << to_json().dump(2) << '\n';
}

void PipelineConfig::apply_overrides(const std::vector<std::string>& assignments) {
  nlohmann::json j = to_json();
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq);
    const std::string raw = a.substr(eq + 1);
    if (!j.contains(key)) throw UsageError("unknown config key '" + key + "'");
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded() || (j[key].is_string() && !value.is_string())) value = raw;
    j[key] = value;
  }
  *this = from_json(j);
}

void PipelineConfig::validate() const {
  dsp.validate();
  model.validate();
  train.validate();
}

}  // namespace tajweed
