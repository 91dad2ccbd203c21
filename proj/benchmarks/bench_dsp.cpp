#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tajweed/dsp.hpp"

using namespace tajweed;

namespace {

Waveform noise_clip(double seconds, int rate) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = 0.3 * std::sin(2.0 * std::numbers::pi * 440.0 * i / rate) + g(rng);
  }
  return w;
}

}  // namespace

static void BM_Resample44kTo11k(benchmark::State& state) {
  const auto w = noise_clip(static_cast<double>(state.range(0)), 44100);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::resample(w, 11025));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.samples.size()));
}
BENCHMARK(BM_Resample44kTo11k)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

static void BM_MelSpectrogram(benchmark::State& state) {
  const auto w = noise_clip(static_cast<double>(state.range(0)), 11025);
  const dsp::DspConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dsp::mel_spectrogram(w, cfg));
}
BENCHMARK(BM_MelSpectrogram)->Arg(1)->Arg(5)->Arg(30)->Unit(benchmark::kMillisecond);

static void BM_PreprocessWaveform(benchmark::State& state) {
  const auto w = noise_clip(static_cast<double>(state.range(0)), 22050);
  const dsp::DspConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dsp::preprocess_waveform(w, cfg));
}
BENCHMARK(BM_PreprocessWaveform)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_MelFilterbank(benchmark::State& state) {
  const dsp::DspConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dsp::MelFilterbank(cfg));
}
BENCHMARK(BM_MelFilterbank)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
