#include "tajweed/evaluator.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "tajweed/error.hpp"

namespace tajweed::eval {
namespace {

void check_shapes(std::span<const LabelRow> preds, std::span<const LabelRow> labels) {
  if (preds.size() != labels.size()) {
    throw DataError("accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw DataError("accuracy: no rows");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + " row " + std::to_string(row) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::array<double, kNumRules> accuracy(std::span<const LabelRow> preds, std::span<const LabelRow> labels) {
  check_shapes(preds, labels);
  std::array<std::size_t, kNumRules> hits{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < kNumRules; ++j) hits[j] += preds[i][j] == labels[i][j];
  }
  std::array<double, kNumRules> acc{};
  for (std::size_t j = 0; j < kNumRules; ++j) {
    acc[j] = static_cast<double>(hits[j]) / static_cast<double>(preds.size());
  }
  return acc;
}

double subset_accuracy(std::span<const LabelRow> preds, std::span<const LabelRow> labels) {
  check_shapes(preds, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double Confusion::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(tn() + tp()) / static_cast<double>(n);
}

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
  if (preds.size() != labels.size()) throw DataError("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] > 1 || labels[i] > 1) throw DataError("confusion: values must be 0 or 1");
    ++c.counts[labels[i]][preds[i]];
  }
  return c;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (std::size_t j = 0; j < kNumRules; ++j) {
    const auto& c = confusion[j];
    rules.push_back({
        {"index", j},
        {"key", kRules[j].key},
        {"name", kRules[j].name},
        {"accuracy", accuracy[j]},
        {"accuracy_percent", format_percent(accuracy[j])},
        {"confusion", {{"tn", c.tn()}, {"fp", c.fp()}, {"fn", c.fn()}, {"tp", c.tp()}}},
    });
  }
  return {
      {"rules", rules},
      {"average_accuracy", average_accuracy},
      {"average_accuracy_percent", format_percent(average_accuracy)},
      {"subset_accuracy", subset_accuracy},
      {"n_clips", n_clips},
      {"checkpoint_id", checkpoint_id},
      {"split_manifest_hash", split_manifest_hash},
  };
}

EvalReport make_report(std::span<const LabelRow> preds, std::span<const LabelRow> labels,
                       std::string checkpoint_id, std::string split_manifest_hash) {
  EvalReport r;
  r.accuracy = accuracy(preds, labels);
  r.average_accuracy = (r.accuracy[0] + r.accuracy[1] + r.accuracy[2]) / 3.0;
  r.subset_accuracy = eval::subset_accuracy(preds, labels);
  r.n_clips = preds.size();
  for (std::size_t j = 0; j < kNumRules; ++j) {
    std::vector<std::uint8_t> p(preds.size()), l(labels.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p[i] = preds[i][j];
      l[i] = labels[i][j];
    }
    r.confusion[j] = confusion(p, l);
  }
  r.checkpoint_id = std::move(checkpoint_id);
  r.split_manifest_hash = std::move(split_manifest_hash);
  return r;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

std::string metrics_csv_header() {
  std::string h = "epoch,train_loss,test_loss";
  for (auto s : kRuleShortNames) h += ",acc_" + std::string(s);
  return h;
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::string row = std::to_string(m.epoch) + "," + fmt_double(m.train_loss) + "," + fmt_double(m.test_loss);
  for (double a : m.test_accuracy) row += "," + fmt_double(a);
  return row;
}

void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << metrics_csv_header() << '\n';
  for (const auto& m : metrics) out << metrics_csv_row(m) << '\n';
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (csv::trim(line) != metrics_csv_header()) {
    throw DataError(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<EpochMetrics> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_row(line);
    if (cells.size() != 3 + kNumRules) {
      throw DataError(path.string() + " row " + std::to_string(row) + ": expected 6 columns");
    }
    EpochMetrics m;
    m.epoch = static_cast<int>(parse_double(cells[0], path, row));
    m.train_loss = parse_double(cells[1], path, row);
    m.test_loss = parse_double(cells[2], path, row);
    for (std::size_t j = 0; j < kNumRules; ++j) m.test_accuracy[j] = parse_double(cells[3 + j], path, row);
    out.push_back(m);
  }
  return out;
}

bool final_test_loss_is_minimum(std::span<const EpochMetrics> metrics) {
  if (metrics.empty()) throw DataError("learning curves: no epochs");
  const double last = metrics.back().test_loss;
  for (const auto& m : metrics) {
    if (m.test_loss < last) return false;
  }
  return true;
}

CurveExport export_learning_curves(std::span<const EpochMetrics> metrics,
                                   const std::filesystem::path& out_dir) {
  if (metrics.empty()) throw DataError("export_learning_curves: no epochs");
  std::filesystem::create_directories(out_dir);
  CurveExport ex;
  ex.csv = out_dir / "metrics.csv";
  ex.chart = out_dir / "curves.png";
  ex.summary = out_dir / "curves.json";
  ex.final_test_loss_is_minimum = final_test_loss_is_minimum(metrics);
  write_metrics_csv(metrics, ex.csv);
  render_learning_curves_png(metrics, ex.chart);

  const auto& last = metrics.back();
  nlohmann::json summary = {
      {"epochs", metrics.size()},
      {"final_test_loss_is_minimum", ex.final_test_loss_is_minimum},
      {"first_train_loss", metrics.front().train_loss},
      {"final_train_loss", last.train_loss},
      {"first_test_loss", metrics.front().test_loss},
      {"final_test_loss", last.test_loss},
      {"final_test_accuracy", last.test_accuracy},
  };
  std::ofstream out(ex.summary);
  out << summary.dump(2) << '\n';
  return ex;
}

}  // namespace tajweed::eval
