#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace tajweed {

/// Mono audio. Samples are finite and nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

/// Decodes a RIFF/WAVE linear-PCM container (8, 16, 24 or 32-bit integer
/// samples, plain or WAVE_FORMAT_EXTENSIBLE). Multi-channel input is
/// downmixed by averaging the channels. Anything else throws DataError.
Waveform decode_wav(std::span<const std::byte> bytes);

Waveform read_wav_file(const std::filesystem::path& path);

/// 16-bit mono PCM encoding, round(s * 32768) clamped to the int16 range.
std::vector<std::byte> encode_wav_pcm16(const Waveform& w);

void write_wav_file(const std::filesystem::path& path, const Waveform& w);

}  // namespace tajweed
