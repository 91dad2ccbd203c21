#include "tajweed/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "shuffle.hpp"
#include "tajweed/error.hpp"
#include "tajweed/log.hpp"

namespace tajweed::train {

std::array<double, kNumRules> compute_pos_weights(const std::array<double, kNumRules>& loss_weights) {
  std::array<double, kNumRules> out{};
  for (std::size_t j = 0; j < kNumRules; ++j) {
    if (!(loss_weights[j] > 0.0)) {
      throw UsageError("compute_pos_weights: loss weight " + std::to_string(loss_weights[j]) +
                       " is not positive");
    }
    out[j] = 1.0 / loss_weights[j];
  }
  return out;
}

torch::Tensor weighted_bce_logits(const torch::Tensor& logits, const torch::Tensor& targets,
                                  const torch::Tensor& pos_weights) {
  if (logits.sizes() != targets.sizes()) {
    throw DataError("weighted_bce_logits: logits " + c10::str(logits.sizes()) + " vs targets " +
                    c10::str(targets.sizes()));
  }
  if (logits.dim() != 2 || pos_weights.dim() != 1 || pos_weights.size(0) != logits.size(1)) {
    throw DataError("weighted_bce_logits: expected B x K logits and K pos_weights");
  }
  const auto pw = pos_weights.to(logits.dtype()).unsqueeze(0);
  const auto y = targets.to(logits.dtype());
  // softplus(-z) = log(1 + exp(-|z|)) + max(-z, 0)
  const auto softplus_neg = torch::log1p(torch::exp(-logits.abs())) + torch::clamp_min(-logits, 0.0);
  const auto per_element = (1.0 - y) * logits + (1.0 + (pw - 1.0) * y) * softplus_neg;
  return per_element.mean();
}

Predictions predictions_from_logits(const torch::Tensor& logits, double threshold) {
  if (logits.dim() != 2 || logits.size(1) != static_cast<std::int64_t>(kNumRules)) {
    throw DataError("predictions_from_logits: expected B x 3 logits");
  }
  const auto probs = torch::sigmoid(logits.detach().to(torch::kFloat64)).contiguous();
  const double* p = probs.data_ptr<double>();
  Predictions out;
  const auto n = static_cast<std::size_t>(probs.size(0));
  out.probabilities.resize(n);
  out.verdicts.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kNumRules; ++j) {
      const double v = p[i * kNumRules + j];
      out.probabilities[i][j] = v;
      out.verdicts[i][j] = v >= threshold ? 1 : 0;
    }
  }
  return out;
}

Predictions predict_batch(model::TajweedNet& net, const torch::Tensor& batch_nhwc, double threshold) {
  torch::NoGradGuard no_grad;
  net->eval();
  return predictions_from_logits(net->forward(batch_nhwc), threshold);
}

torch::Tensor TensorSet::images(const torch::Tensor& index) const {
  return planes.index_select(0, index).unsqueeze(1).expand({-1, 3, -1, -1}).contiguous();
}

std::vector<LabelRow> TensorSet::labels() const {
  std::vector<LabelRow> out(static_cast<std::size_t>(size()));
  const auto t = targets.contiguous();
  const float* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < kNumRules; ++j) out[i][j] = p[i * kNumRules + j] >= 0.5f ? 1 : 0;
  }
  return out;
}

TensorSet make_tensor_set(std::span<const dsp::SpectrogramTensor> tensors, std::span<const RuleLabels> labels) {
  if (tensors.size() != labels.size()) throw DataError("make_tensor_set: tensors and labels differ in length");
  constexpr auto H = dsp::SpectrogramTensor::kHeight;
  constexpr auto W = dsp::SpectrogramTensor::kWidth;
  TensorSet set;
  const auto n = static_cast<std::int64_t>(tensors.size());
  set.planes = torch::empty({n, H, W}, torch::kFloat32);
  set.targets = torch::empty({n, static_cast<std::int64_t>(kNumRules)}, torch::kFloat32);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& t = tensors[static_cast<std::size_t>(i)];
    const auto plane = t.plane(0);
    std::memcpy(set.planes[i].data_ptr<float>(), plane.data(), plane.size() * sizeof(float));
    const auto lab = labels[static_cast<std::size_t>(i)].as_array();
    for (std::size_t j = 0; j < kNumRules; ++j) set.targets[i][static_cast<std::int64_t>(j)] = lab[j];
    set.clip_ids.push_back(t.clip_id);
  }
  return set;
}

TensorSet load_tensor_set(std::span<const ClipRecord> records, const dsp::TensorCache& cache) {
  std::vector<dsp::SpectrogramTensor> tensors;
  std::vector<RuleLabels> labels;
  tensors.reserve(records.size());
  for (const auto& r : records) {
    auto t = cache.load(r.clip_id);
    if (!t) {
      throw DataError("no preprocessed tensor for clip " + r.clip_id + " in " + cache.dir().string() +
                      " (run `preprocess` first)");
    }
    tensors.push_back(std::move(*t));
    labels.push_back(r.labels);
  }
  return make_tensor_set(tensors, labels);
}

SetEvaluation evaluate_set(model::TajweedNet& net, const TensorSet& set, const torch::Tensor& pos_weights,
                           double threshold, int batch_size) {
  if (set.size() == 0) throw DataError("evaluate_set: empty set");
  torch::NoGradGuard no_grad;
  net->eval();
  SetEvaluation ev;
  double loss_sum = 0.0;
  for (std::int64_t start = 0; start < set.size(); start += batch_size) {
    const auto end = std::min<std::int64_t>(start + batch_size, set.size());
    const auto idx = torch::arange(start, end, torch::kLong);
    const auto logits = net->forward_nchw(set.images(idx));
    const auto targets = set.targets.index_select(0, idx);
    loss_sum += weighted_bce_logits(logits, targets, pos_weights).item<double>() * static_cast<double>(end - start);
    auto p = predictions_from_logits(logits, threshold);
    ev.predictions.probabilities.insert(ev.predictions.probabilities.end(), p.probabilities.begin(),
                                        p.probabilities.end());
    ev.predictions.verdicts.insert(ev.predictions.verdicts.end(), p.verdicts.begin(), p.verdicts.end());
  }
  ev.loss = loss_sum / static_cast<double>(set.size());
  ev.accuracy = eval::accuracy(ev.predictions.verdicts, set.labels());
  return ev;
}

void make_deterministic(std::uint64_t seed) {
  torch::manual_seed(seed);
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
}

TrainResult train(model::TajweedNet& net, const TensorSet& train_set, const TensorSet& test_set,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("train: empty train split");
  if (test_set.size() == 0) throw DataError("train: empty test split");

  make_deterministic(cfg.seed);
  const auto pw_values = compute_pos_weights(cfg.loss_weights);
  const auto pos_weights = torch::tensor(std::vector<double>(pw_values.begin(), pw_values.end()), torch::kFloat32);

  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  std::mt19937_64 shuffle_rng(cfg.seed);

  const bool persist = !options.run_dir.empty();
  std::ofstream metrics_out;
  if (persist) {
    std::filesystem::create_directories(options.run_dir);
    metrics_out.open(options.run_dir / "metrics.csv", std::ios::binary);
    if (!metrics_out) throw RuntimeFailure("cannot write " + (options.run_dir / "metrics.csv").string());
    metrics_out << eval::metrics_csv_header() << '\n' << std::flush;
  }

  TrainResult result;
  result.best_test_loss = std::numeric_limits<double>::infinity();
  std::vector<std::int64_t> order(static_cast<std::size_t>(train_set.size()));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    net->train();
    std::iota(order.begin(), order.end(), 0);
    detail::fisher_yates(order, shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end), torch::kLong);
      optimizer.zero_grad();
      const auto logits = net->forward_nchw(train_set.images(idx));
      const auto loss = weighted_bce_logits(logits, train_set.targets.index_select(0, idx), pos_weights);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        nlohmann::json diag = {{"epoch", epoch}, {"batch_start", start}, {"loss", std::to_string(value)}};
        for (std::size_t i = start; i < end; ++i) diag["clip_ids"].push_back(train_set.clip_ids[order[i]]);
        if (persist) std::ofstream(options.run_dir / "nonfinite_batch.json") << diag.dump(2) << '\n';
        throw RuntimeFailure("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch clips " +
                             diag["clip_ids"].dump());
      }
      loss.backward();
      optimizer.step();
      loss_sum += value * static_cast<double>(end - start);
    }

    const auto test_eval = evaluate_set(net, test_set, pos_weights, cfg.threshold, cfg.batch_size);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.test_loss = test_eval.loss;
    m.test_accuracy = test_eval.accuracy;
    result.metrics.push_back(m);

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d/%d train_loss=%.4f test_loss=%.4f acc=(%.4f, %.4f, %.4f) %.1fs", epoch,
                  cfg.epochs, m.train_loss, m.test_loss, m.test_accuracy[0], m.test_accuracy[1], m.test_accuracy[2],
                  secs);
    log::info(line);

    const bool is_best = m.test_loss < result.best_test_loss;
    if (is_best) {
      result.best_test_loss = m.test_loss;
      result.best_epoch = epoch;
    }
    if (persist) {
      metrics_out << eval::metrics_csv_row(m) << '\n' << std::flush;
      nlohmann::json extra = options.checkpoint_extra;
      extra["epoch"] = epoch;
      extra["test_loss"] = m.test_loss;
      if (is_best) result.best_checkpoint_id = model::save_checkpoint(net, options.run_dir / "checkpoint_best", extra);
      if (epoch == cfg.epochs) {
        result.final_checkpoint_id = model::save_checkpoint(net, options.run_dir / "checkpoint_final", extra);
      }
    }
    if (options.on_epoch) options.on_epoch(m);
  }

  if (persist) {
    metrics_out.close();
    eval::export_learning_curves(result.metrics, options.run_dir);
  }
  net->eval();
  return result;
}

}  // namespace tajweed::train
