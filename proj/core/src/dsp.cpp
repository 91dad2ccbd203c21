#include "tajweed/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tajweed/error.hpp"
#include "tajweed/hashing.hpp"
#include "tajweed/ingest.hpp"

namespace tajweed::dsp {
namespace {

constexpr int kZeroCrossings = 6;
constexpr double kRolloff = 0.99;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
constexpr double kLinearHzPerMel = 200.0 / 3.0;
constexpr double kBreakHz = 1000.0;
constexpr double kBreakMel = kBreakHz / kLinearHzPerMel;
const double kLogStep = std::log(6.4) / 27.0;

// fftw_plan_* is not thread-safe; executing an existing plan on new arrays is.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }

  fftw_plan r2c(int n) {
    std::lock_guard lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    auto* in = fftw_alloc_real(n);
    auto* out = fftw_alloc_complex(n / 2 + 1);
    // ESTIMATE keeps plan selection (and thus rounding) identical across runs.
    fftw_plan p = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, p);
    return p;
  }

 private:
  ~FftPlans() {
    for (auto& [n, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mu_;
  std::map<int, fftw_plan> plans_;
};

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i = std::abs(i) % period;
  return static_cast<std::size_t>(i >= static_cast<std::ptrdiff_t>(n) ? period - i : i);
}

}  // namespace

void DspConfig::validate() const {
  if (target_rate_hz <= 0) throw UsageError("dsp: target_rate_hz must be positive");
  if (n_fft <= 0 || hop <= 0 || hop > n_fft) throw UsageError("dsp: need 0 < hop <= n_fft");
  if (!(f_min_hz >= 0.0 && f_min_hz < f_max_hz && f_max_hz <= target_rate_hz / 2.0)) {
    throw UsageError("dsp: need 0 <= f_min < f_max <= target_rate / 2");
  }
  if (n_mels != static_cast<int>(SpectrogramTensor::kHeight) ||
      out_frames != static_cast<int>(SpectrogramTensor::kWidth)) {
    throw UsageError("dsp: n_mels and out_frames must both be 224");
  }
  if (window != "hann") throw UsageError("dsp: unsupported window '" + window + "'");
  if (!(spectrum_power > 0.0)) throw UsageError("dsp: spectrum_power must be positive");
  if (!(log_offset >= 0.0)) throw UsageError("dsp: log_offset must be nonnegative");
}

std::string DspConfig::canonical() const {
  // nlohmann::json objects are key-sorted, so the dump is canonical.
  nlohmann::json j = {
      {"target_rate_hz", target_rate_hz}, {"n_fft", n_fft},
      {"hop", hop},                       {"n_mels", n_mels},
      {"f_min_hz", f_min_hz},             {"f_max_hz", f_max_hz},
      {"log_offset", log_offset},         {"out_frames", out_frames},
      {"window", window},                 {"spectrum_power", spectrum_power},
  };
  return j.dump();
}

std::string DspConfig::hash() const { return sha256_hex(canonical()).substr(0, 16); }

std::vector<float> SpectrogramTensor::plane(std::size_t channel) const {
  std::vector<float> out(kHeight * kWidth);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data[i * kChannels + channel];
  return out;
}

Waveform resample(const Waveform& w, int target_rate_hz) {
  if (w.samples.empty()) throw DataError("resample: empty waveform");
  if (w.sample_rate_hz <= 0 || target_rate_hz <= 0) throw DataError("resample: rates must be positive");
  if (w.sample_rate_hz == target_rate_hz) return w;

  const int g = std::gcd(w.sample_rate_hz, target_rate_hz);
  const int orig = w.sample_rate_hz / g;
  const int next = target_rate_hz / g;
  const double base = std::min(orig, next) * kRolloff;
  const int width = static_cast<int>(std::ceil(kZeroCrossings * orig / base));
  const int taps = 2 * width + orig;

  // kernel[phase][k] weights input sample (block * orig + k - width).
  std::vector<double> kernel(static_cast<std::size_t>(next) * taps);
  for (int phase = 0; phase < next; ++phase) {
    for (int k = 0; k < taps; ++k) {
      double t = (-static_cast<double>(phase) / next + static_cast<double>(k - width) / orig) * base;
      t = std::clamp(t, -static_cast<double>(kZeroCrossings), static_cast<double>(kZeroCrossings));
      const double c = std::cos(t * std::numbers::pi / kZeroCrossings / 2.0);
      const double window = c * c;
      t *= std::numbers::pi;
      const double sinc = t == 0.0 ? 1.0 : std::sin(t) / t;
      kernel[static_cast<std::size_t>(phase) * taps + k] = sinc * window * (base / orig);
    }
  }

  const auto n = static_cast<std::ptrdiff_t>(w.samples.size());
  const auto target_len = static_cast<std::size_t>(
      std::ceil(static_cast<double>(next) * static_cast<double>(n) / orig));
  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(target_len);
  for (std::size_t o = 0; o < target_len; ++o) {
    const auto block = static_cast<std::ptrdiff_t>(o / next);
    const auto phase = static_cast<std::size_t>(o % next);
    const double* kern = kernel.data() + phase * taps;
    const std::ptrdiff_t start = block * orig - width;
    const std::ptrdiff_t k0 = std::max<std::ptrdiff_t>(0, -start);
    const std::ptrdiff_t k1 = std::min<std::ptrdiff_t>(taps, n - start);
    double acc = 0.0;
    for (std::ptrdiff_t k = k0; k < k1; ++k) acc += kern[k] * w.samples[start + k];
    out.samples[o] = acc;
  }
  return out;
}

double hz_to_mel(double hz) {
  if (hz >= kBreakHz) return kBreakMel + std::log(hz / kBreakHz) / kLogStep;
  return hz / kLinearHzPerMel;
}

double mel_to_hz(double mel) {
  if (mel >= kBreakMel) return kBreakHz * std::exp(kLogStep * (mel - kBreakMel));
  return mel * kLinearHzPerMel;
}

MelFilterbank::MelFilterbank(const DspConfig& cfg) {
  cfg.validate();
  const std::size_t n_bins = static_cast<std::size_t>(cfg.n_fft / 2 + 1);
  const std::size_t n_filters = static_cast<std::size_t>(cfg.n_mels);
  bin_hz_ = static_cast<double>(cfg.target_rate_hz) / cfg.n_fft;

  const double mel_lo = hz_to_mel(cfg.f_min_hz);
  const double mel_hi = hz_to_mel(cfg.f_max_hz);
  edges_.resize(n_filters + 2);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_filters + 1);
    edges_[i] = mel_to_hz(mel);
  }
  edges_.front() = cfg.f_min_hz;
  edges_.back() = cfg.f_max_hz;
  centers_.assign(edges_.begin() + 1, edges_.end() - 1);

  weights_ = Matrix(n_filters, n_bins);
  for (std::size_t m = 0; m < n_filters; ++m) {
    const double lo = edges_[m], mid = edges_[m + 1], hi = edges_[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = bin_frequency(k);
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      weights_(m, k) = std::max(0.0, std::min(rising, falling)) * norm;
    }
  }
}

Matrix power_spectrogram(std::span<const double> samples, const DspConfig& cfg) {
  const auto n = samples.size();
  const auto n_fft = static_cast<std::size_t>(cfg.n_fft);
  const auto hop = static_cast<std::size_t>(cfg.hop);
  const auto pad = static_cast<std::ptrdiff_t>(n_fft / 2);
  const std::size_t frames = n / hop + 1;
  const std::size_t n_bins = n_fft / 2 + 1;

  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n_fft);
  }

  fftw_plan plan = FftPlans::instance().r2c(cfg.n_fft);
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n_fft));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(n_bins));

  Matrix spec(n_bins, frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) - pad;
    for (std::size_t i = 0; i < n_fft; ++i) {
      in.get()[i] = samples[reflect_index(start + static_cast<std::ptrdiff_t>(i), n)] * window[i];
    }
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      const double mag2 = re * re + im * im;
      spec(k, t) = cfg.spectrum_power == 2.0 ? mag2 : std::pow(std::sqrt(mag2), cfg.spectrum_power);
    }
  }
  return spec;
}

Matrix mel_spectrogram(const Waveform& w, const DspConfig& cfg) {
  cfg.validate();
  if (w.sample_rate_hz != cfg.target_rate_hz) {
    throw DataError("mel_spectrogram: waveform at " + std::to_string(w.sample_rate_hz) +
                    " Hz, expected " + std::to_string(cfg.target_rate_hz) + " Hz");
  }
  if (w.samples.size() < static_cast<std::size_t>(cfg.hop)) {
    throw DataError("mel_spectrogram: waveform shorter than one hop (" +
                    std::to_string(w.samples.size()) + " < " + std::to_string(cfg.hop) + " samples)");
  }
  const Matrix spec = power_spectrogram(w.samples, cfg);
  static thread_local std::unique_ptr<MelFilterbank> cached;
  static thread_local DspConfig cached_cfg;
  if (!cached || !(cached_cfg == cfg)) {
    cached = std::make_unique<MelFilterbank>(cfg);
    cached_cfg = cfg;
  }
  const Matrix& fb = cached->weights();

  Matrix mel(fb.rows(), spec.cols());
  for (std::size_t m = 0; m < fb.rows(); ++m) {
    const auto weights = fb.row(m);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double wk = weights[k];
      if (wk == 0.0) continue;
      const auto bins = spec.row(k);
      auto dst = mel.row(m);
      for (std::size_t t = 0; t < bins.size(); ++t) dst[t] += wk * bins[t];
    }
  }
  return mel;
}

Matrix log_normalize(const Matrix& m, double log_offset) {
  Matrix out(m.rows(), m.cols());
  auto dst = out.values();
  const auto src = m.values();
  if (src.empty()) return out;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::log(src[i] + log_offset);

  // exact check: rounding in the mean would leave a tiny nonzero std
  if (std::all_of(dst.begin(), dst.end(), [&](double v) { return v == dst[0]; })) {
    std::fill(dst.begin(), dst.end(), 0.0);
    return out;
  }
  const double n = static_cast<double>(dst.size());
  const double mean = std::accumulate(dst.begin(), dst.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : dst) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (sd == 0.0 || !std::isfinite(sd)) {
    std::fill(dst.begin(), dst.end(), 0.0);
    return out;
  }
  for (double& v : dst) v = (v - mean) / sd;
  return out;
}

SpectrogramTensor to_model_tensor(const Matrix& m, std::size_t out_frames) {
  constexpr auto H = SpectrogramTensor::kHeight;
  constexpr auto W = SpectrogramTensor::kWidth;
  constexpr auto C = SpectrogramTensor::kChannels;
  if (m.rows() != H) {
    throw DataError("to_model_tensor: expected " + std::to_string(H) + " mel rows, got " +
                    std::to_string(m.rows()));
  }
  if (m.cols() == 0) throw DataError("to_model_tensor: no time frames");
  if (out_frames != W) throw UsageError("to_model_tensor: out_frames must be 224");

  const std::size_t cols = m.cols();
  const double scale = static_cast<double>(cols) / static_cast<double>(out_frames);
  SpectrogramTensor t;
  for (std::size_t j = 0; j < out_frames; ++j) {
    double src = (static_cast<double>(j) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(cols - 1));
    const auto j0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t j1 = std::min(j0 + 1, cols - 1);
    const double a = src - static_cast<double>(j0);
    for (std::size_t h = 0; h < H; ++h) {
      const auto v = static_cast<float>((1.0 - a) * m(h, j0) + a * m(h, j1));
      float* px = &t.data[(h * W + j) * C];
      for (std::size_t c = 0; c < C; ++c) px[c] = v;
    }
  }
  return t;
}

SpectrogramTensor preprocess_waveform(const Waveform& w, const DspConfig& cfg,
                                      const std::string& clip_id) {
  cfg.validate();
  const Waveform at_rate = resample(w, cfg.target_rate_hz);
  SpectrogramTensor t =
      to_model_tensor(log_normalize(mel_spectrogram(at_rate, cfg), cfg.log_offset), cfg.out_frames);
  t.clip_id = clip_id;
  return t;
}

SpectrogramTensor preprocess_clip(const ClipRecord& record, const DspConfig& cfg) {
  try {
    return preprocess_waveform(read_wav_file(record.audio_path), cfg, record.clip_id);
  } catch (const Error& e) {
    throw DataError("clip " + record.clip_id + ": " + e.what());
  }
}

}  // namespace tajweed::dsp
