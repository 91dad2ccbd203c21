#include "tajweed/ingest.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "shuffle.hpp"
#include "tajweed/error.hpp"
#include "tajweed/wav.hpp"

namespace tajweed {
namespace {

constexpr std::array<std::string_view, 4> kHeader{"clip_id", "separate_stretching", "tight_noon",
                                                  "hide"};

void check_wav_header(const std::filesystem::path& path, const std::string& clip_id) {
  std::ifstream in(path, std::ios::binary);
  char head[12] = {};
  in.read(head, sizeof head);
  if (in.gcount() != sizeof head || std::string_view(head, 4) != "RIFF" ||
      std::string_view(head + 8, 4) != "WAVE") {
    throw DataError("clip " + clip_id + ": " + path.string() +
                    " is not a RIFF/WAVE file (convert it to linear-PCM WAV first)");
  }
}

}  // namespace

std::string speaker_of(std::string_view clip_id) {
  const auto us = clip_id.find('_');
  return std::string(clip_id.substr(0, us));
}

std::vector<ClipRecord> load_corpus(const std::filesystem::path& root_dir,
                                    const std::filesystem::path& labels_file,
                                    const IngestOptions& options) {
  std::ifstream in(labels_file);
  if (!in) throw DataError("cannot open label table " + labels_file.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(labels_file.string() + ": empty label table");
  csv::strip_bom(line);
  const auto header = csv::split_row(line);
  if (header.size() != kHeader.size() || !std::equal(header.begin(), header.end(), kHeader.begin())) {
    throw DataError(labels_file.string() +
                    ": expected header clip_id,separate_stretching,tight_noon,hide");
  }

  std::vector<ClipRecord> records;
  std::unordered_set<std::string> seen;
  std::vector<std::string> missing_audio;
  std::size_t row_no = 1;
  std::size_t excluded = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_row(line);
    if (cells.size() != kHeader.size()) {
      throw DataError(labels_file.string() + " row " + std::to_string(row_no) + ": expected 4 columns");
    }
    ClipRecord rec;
    rec.clip_id = cells[0];
    if (rec.clip_id.empty()) {
      throw DataError(labels_file.string() + " row " + std::to_string(row_no) + ": empty clip_id");
    }
    if (!seen.insert(rec.clip_id).second) {
      throw DataError(labels_file.string() + " row " + std::to_string(row_no) +
                      ": duplicate clip_id " + rec.clip_id);
    }
    rec.speaker_id = speaker_of(rec.clip_id);

    std::array<std::uint8_t, kNumRules> labels{};
    for (std::size_t j = 0; j < kNumRules; ++j) {
      const std::string& cell = cells[j + 1];
      if (cell == "0" || cell == "1") {
        labels[j] = static_cast<std::uint8_t>(cell[0] - '0');
      } else if (cell.empty() && rec.clip_id == kImputedClip && kRules[j].key == "tight_noon") {
        labels[j] = 1;
        rec.imputed = true;
      } else if (cell.empty()) {
        throw DataError(labels_file.string() + " row " + std::to_string(row_no) + ": missing " +
                        std::string(kRules[j].key) + " label for " + rec.clip_id);
      } else {
        throw DataError(labels_file.string() + " row " + std::to_string(row_no) + ": " +
                        std::string(kRules[j].key) + " value '" + cell + "' is not 0 or 1");
      }
    }
    rec.labels = RuleLabels::from_array(labels);

    if (rec.imputed) {
      if (options.exclude_imputed) {
        spdlog::info("ingest: excluding {} (missing tight_noon label)", rec.clip_id);
        ++excluded;
        continue;
      }
      spdlog::info("ingest: imputed tight_noon=1 for {}", rec.clip_id);
    }

    rec.audio_path = root_dir / "audio" / (rec.clip_id + ".wav");
    if (!std::filesystem::is_regular_file(rec.audio_path)) {
      missing_audio.push_back(rec.clip_id);
      continue;
    }
    records.push_back(std::move(rec));
  }

  if (!missing_audio.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing_audio.size(); ++i) {
      if (i == 10) {
        list += " ... (" + std::to_string(missing_audio.size()) + " total)";
        break;
      }
      list += (i ? ", " : "") + missing_audio[i];
    }
    throw DataError("missing audio for labelled clips: " + list);
  }

  for (const auto& rec : records) {
    if (!options.check_audio) break;
    check_wav_header(rec.audio_path, rec.clip_id);
    if (options.decode_audio) {
      try {
        (void)read_wav_file(rec.audio_path);
      } catch (const Error& e) {
        throw DataError("clip " + rec.clip_id + ": " + e.what());
      }
    }
  }

  if (!records.empty()) {
    const auto neg = class_distribution(records);
    spdlog::info("ingest: {} clips ({} excluded); label-0 fractions mad={:.4f} ghunnah={:.4f} ikhfaa={:.4f}",
                 records.size(), excluded, neg[0], neg[1], neg[2]);
  }
  return records;
}

std::vector<ClipRecord> load_corpus(const std::filesystem::path& root_dir,
                                    const IngestOptions& options) {
  return load_corpus(root_dir, root_dir / "labels.csv", options);
}

std::array<double, kNumRules> class_distribution(std::span<const ClipRecord> records) {
  if (records.empty()) throw DataError("class_distribution: no records");
  std::array<std::size_t, kNumRules> zeros{};
  for (const auto& r : records) {
    const auto a = r.labels.as_array();
    for (std::size_t j = 0; j < kNumRules; ++j) zeros[j] += a[j] == 0;
  }
  std::array<double, kNumRules> out{};
  for (std::size_t j = 0; j < kNumRules; ++j) {
    out[j] = static_cast<double>(zeros[j]) / static_cast<double>(records.size());
  }
  return out;
}

DatasetSplit split_dataset(std::span<const ClipRecord> records, std::optional<std::uint64_t> seed) {
  if (!seed) throw UsageError("split_dataset: a seed is required");
  if (records.size() < 5) throw DataError("split_dataset: need at least 5 records");

  // Strata in key order, members in corpus order.
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i) strata[records[i].labels.triple()].push_back(i);

  // Largest-remainder allocation of floor(0.8 N) train slots, in integers.
  struct Quota {
    int key;
    std::size_t base;
    std::size_t remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [key, members] : strata) {
    const std::size_t n = members.size();
    quotas.push_back({key, 4 * n / 5, 4 * n % 5});
    assigned += 4 * n / 5;
  }
  const std::size_t n_train = 4 * records.size() / 5;
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t i = 0; assigned < n_train; ++i, ++assigned) ++quotas[order[i]].base;

  std::mt19937_64 rng(*seed);
  std::vector<bool> is_train(records.size(), false);
  std::size_t qi = 0;
  for (auto& [key, members] : strata) {
    std::vector<std::size_t> shuffled = members;
    detail::fisher_yates(shuffled, rng);
    for (std::size_t i = 0; i < quotas[qi].base; ++i) is_train[shuffled[i]] = true;
    ++qi;
  }

  DatasetSplit split;
  split.seed = *seed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (is_train[i] ? split.train : split.test).push_back(records[i]);
  }
  return split;
}

std::string split_manifest_csv(const DatasetSplit& split) {
  std::ostringstream out;
  out << "clip_id,subset\n";
  for (const auto& r : split.train) out << r.clip_id << ",train\n";
  for (const auto& r : split.test) out << r.clip_id << ",test\n";
  return out.str();
}

void write_split_manifest(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write split manifest " + path.string());
  out << split_manifest_csv(split);
}

DatasetSplit apply_split_manifest(std::span<const ClipRecord> records,
                                  const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open split manifest " + manifest_path.string());
  std::string line;
  std::getline(in, line);
  csv::strip_bom(line);
  if (csv::trim(line) != "clip_id,subset") {
    throw DataError(manifest_path.string() + ": expected header clip_id,subset");
  }
  std::unordered_map<std::string, bool> subset;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_row(line);
    if (cells.size() != 2 || (cells[1] != "train" && cells[1] != "test")) {
      throw DataError(manifest_path.string() + " row " + std::to_string(row_no) + ": malformed");
    }
    subset[cells[0]] = cells[1] == "train";
  }
  DatasetSplit split;
  for (const auto& r : records) {
    const auto it = subset.find(r.clip_id);
    if (it == subset.end()) {
      throw DataError(manifest_path.string() + ": clip " + r.clip_id + " not in manifest");
    }
    (it->second ? split.train : split.test).push_back(r);
  }
  if (subset.size() != records.size()) {
    throw DataError(manifest_path.string() + ": manifest lists clips that are not in the corpus");
  }
  return split;
}

void write_labels_csv(std::span<const ClipRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "clip_id,separate_stretching,tight_noon,hide\n";
  for (const auto& r : records) {
    out << r.clip_id << ',' << int(r.labels.separate_stretching) << ',' << int(r.labels.tight_noon)
        << ',' << int(r.labels.hide) << '\n';
  }
}

}  // namespace tajweed
