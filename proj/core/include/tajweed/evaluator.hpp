#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tajweed/rules.hpp"

namespace tajweed::eval {

using LabelRow = std::array<std::uint8_t, kNumRules>;

/// One row of the learning-curve log.
struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::array<double, kNumRules> test_accuracy{};

  bool operator==(const EpochMetrics&) const = default;
};

/// acc[j] = fraction of rows where preds[:, j] == labels[:, j].
std::array<double, kNumRules> accuracy(std::span<const LabelRow> preds, std::span<const LabelRow> labels);

/// Fraction of rows where all three verdicts match.
double subset_accuracy(std::span<const LabelRow> preds, std::span<const LabelRow> labels);

/// [[TN, FP], [FN, TP]] indexed [label][pred].
struct Confusion {
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t tn() const { return counts[0][0]; }
  std::size_t fp() const { return counts[0][1]; }
  std::size_t fn() const { return counts[1][0]; }
  std::size_t tp() const { return counts[1][1]; }
  std::size_t total() const { return tn() + fp() + fn() + tp(); }
  double accuracy() const;

  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);

struct EvalReport {
  std::array<double, kNumRules> accuracy{};
  double average_accuracy = 0.0;
  double subset_accuracy = 0.0;
  std::array<Confusion, kNumRules> confusion{};
  std::size_t n_clips = 0;
  std::string checkpoint_id;
  std::string split_manifest_hash;

  nlohmann::json to_json() const;
};

EvalReport make_report(std::span<const LabelRow> preds, std::span<const LabelRow> labels,
                       std::string checkpoint_id, std::string split_manifest_hash);

/// "95.35%" style rendering.
std::string format_percent(double fraction);

// metrics.csv: epoch,train_loss,test_loss,acc_mad,acc_ghunnah,acc_ikhfaa
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::filesystem::path& path);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

bool final_test_loss_is_minimum(std::span<const EpochMetrics> metrics);

struct CurveExport {
  std::filesystem::path csv;
  std::filesystem::path chart;
  std::filesystem::path summary;
  bool final_test_loss_is_minimum = false;
};

/// Writes metrics.csv, curves.png and curves.json (carrying the
/// final_test_loss_is_minimum flag) into out_dir.
CurveExport export_learning_curves(std::span<const EpochMetrics> metrics,
                                   const std::filesystem::path& out_dir);

/// Two stacked panels: train/test loss and per-rule test accuracy vs epoch.
void render_learning_curves_png(std::span<const EpochMetrics> metrics,
                                const std::filesystem::path& path, int width = 800,
                                int height = 600);

}  // namespace tajweed::eval
