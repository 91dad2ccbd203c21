#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tajweed/wav.hpp"

namespace tajweed {

struct ClipRecord;

namespace dsp {

/// Feature extraction parameters. Defaults are the pinned pipeline values;
/// the golden fixtures under tests/data/golden are generated from them.
struct DspConfig {
  int target_rate_hz = 11025;
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 224;
  double f_min_hz = 0.0;
  double f_max_hz = 4000.0;
  double log_offset = 1e-6;
  int out_frames = 224;
  std::string window = "hann";
  double spectrum_power = 2.0;

  /// Throws UsageError when an invariant is violated.
  void validate() const;
  /// Canonical one-line JSON; input to hash().
  std::string canonical() const;
  /// First 16 hex digits of SHA-256(canonical()).
  std::string hash() const;

  bool operator==(const DspConfig&) const = default;
};

/// Dense row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Model input: kHeight (mel) x kWidth (time) x kChannels, row-major HWC,
/// the three channel planes identical.
struct SpectrogramTensor {
  static constexpr std::size_t kHeight = 224;
  static constexpr std::size_t kWidth = 224;
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kSize = kHeight * kWidth * kChannels;

  std::vector<float> data = std::vector<float>(kSize, 0.0f);
  std::string clip_id;

  float at(std::size_t h, std::size_t w, std::size_t c) const {
    return data[(h * kWidth + w) * kChannels + c];
  }
  /// One channel plane, kHeight x kWidth row-major.
  std::vector<float> plane(std::size_t channel = 0) const;
};

/// Band-limited resampling with a Hann-windowed sinc kernel (6 zero
/// crossings, cutoff at 0.99 of the lower Nyquist rate), evaluated on the
/// reduced rational ratio. Output length is ceil(n * target / source).
Waveform resample(const Waveform& w, int target_rate_hz);

/// Triangular filters on the Slaney mel scale with area normalisation.
class MelFilterbank {
 public:
  explicit MelFilterbank(const DspConfig& cfg);

  std::size_t num_filters() const { return weights_.rows(); }
  std::size_t num_bins() const { return weights_.cols(); }
  const Matrix& weights() const { return weights_; }
  /// Peak frequency of each filter, strictly increasing.
  std::span<const double> center_frequencies() const { return centers_; }
  /// Edge frequencies, num_filters() + 2 entries.
  std::span<const double> edge_frequencies() const { return edges_; }
  double bin_frequency(std::size_t k) const { return k * bin_hz_; }

 private:
  Matrix weights_;
  std::vector<double> edges_;
  std::vector<double> centers_;
  double bin_hz_ = 0.0;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// |STFT|^power with a periodic window and centred reflect padding.
/// Shape (n_fft / 2 + 1) x (len / hop + 1).
Matrix power_spectrogram(std::span<const double> samples, const DspConfig& cfg);

/// Shape n_mels x (len / hop + 1). Requires w at cfg.target_rate_hz and at
/// least one hop of samples.
Matrix mel_spectrogram(const Waveform& w, const DspConfig& cfg);

/// (log(m + offset) - mean) / std over the whole matrix, population std.
/// A constant input maps to all zeros.
Matrix log_normalize(const Matrix& m, double log_offset = 1e-6);

/// Bilinear resize of the time axis (half-pixel centres, edge clamped) to
/// out_frames columns, then tiling to three identical channels.
SpectrogramTensor to_model_tensor(const Matrix& m, std::size_t out_frames = SpectrogramTensor::kWidth);

/// resample -> mel_spectrogram -> log_normalize -> to_model_tensor.
SpectrogramTensor preprocess_waveform(const Waveform& w, const DspConfig& cfg,
                                      const std::string& clip_id = {});

/// Reads the clip's audio and runs preprocess_waveform. Errors carry the clip id.
SpectrogramTensor preprocess_clip(const ClipRecord& record, const DspConfig& cfg);

}  // namespace dsp
}  // namespace tajweed
