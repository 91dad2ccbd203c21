#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace tajweed::testing {

Waveform tone(double freq_hz, double seconds, int rate, double amp, double noise, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate);
    if (noise > 0.0) x += noise * gauss(rng);
    w.samples[i] = std::clamp(x, -1.0, 1.0);
  }
  return w;
}

Waveform textured_clip(int index, double seconds, int rate, std::uint64_t seed) {
  const int harmonics = 1 + index % 4;
  const double am_hz = 1.0 + (index / 4) % 8;
  const double f0 = 220.0 + 45.0 * ((index / 4) % 8) + 15.0 * (index % 4);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.05);
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) s += std::sin(2.0 * std::numbers::pi * f0 * h * t) / harmonics;
    const double env = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * am_hz * t));
    w.samples[i] = 0.5 * env * s + gauss(rng);
  }
  return w;
}

Corpus write_corpus(const std::filesystem::path& root, const CorpusSpec& spec) {
  std::filesystem::create_directories(root / "audio");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Corpus c;
  c.root = root;
  std::ofstream labels(root / "labels.csv");
  labels << "clip_id,separate_stretching,tight_noon,hide\n";
  for (std::size_t i = 0; i < spec.n_clips; ++i) {
    const auto speaker = 1 + i / static_cast<std::size_t>(spec.clips_per_speaker);
    const auto n = 1 + i % static_cast<std::size_t>(spec.clips_per_speaker);
    const std::string id = "S" + std::to_string(speaker) + "_" + std::to_string(n);
    std::array<std::uint8_t, 3> lab{};
    for (int j = 0; j < 3; ++j) lab[j] = u(rng) < spec.negative_fraction[j] ? 0 : 1;
    const bool blank = spec.include_s22_6 && id == "S22_6";
    if (blank) lab[1] = 1;
    labels << id << ',' << int(lab[0]) << ',' << (blank ? std::string() : std::to_string(lab[1])) << ','
           << int(lab[2]) << '\n';
    const auto w = tone(spec.base_hz + spec.step_hz * static_cast<double>(i % spec.freq_cycle), spec.seconds, spec.rate_hz, 0.5,
                        spec.noise, spec.seed * 7919 + i);
    write_wav_file(root / "audio" / (id + ".wav"), w);
    c.clip_ids.push_back(id);
    c.labels.push_back(RuleLabels::from_array(lab));
  }
  return c;
}

TempDir::TempDir(const std::string& prefix) {
  std::random_device rd;
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    path_ = base / (prefix + "-" + std::to_string(rd()));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace tajweed::testing
