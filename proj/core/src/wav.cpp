#include "tajweed/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "tajweed/error.hpp"

namespace tajweed {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV and tensor I/O assume a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  template <typename T>
  T read() {
    if (!has(sizeof(T))) throw DataError("wav: truncated header");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string tag() {
    if (!has(4)) throw DataError("wav: truncated chunk id");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

double decode_sample(const std::byte* p, int bits) {
  switch (bits) {
    case 8:
      return (static_cast<double>(std::to_integer<std::uint8_t>(p[0])) - 128.0) / 128.0;
    case 16: {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      return v / 32768.0;
    }
    case 24: {
      std::int32_t v = std::to_integer<std::int32_t>(p[0]) |
                       (std::to_integer<std::int32_t>(p[1]) << 8) |
                       (std::to_integer<std::int32_t>(p[2]) << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }
    case 32: {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      return v / 2147483648.0;
    }
    default:
      throw DataError("wav: unsupported bit depth " + std::to_string(bits));
  }
}

}  // namespace

Waveform decode_wav(std::span<const std::byte> bytes) {
  Reader r(bytes);
  if (r.tag() != "RIFF") throw DataError("wav: missing RIFF header");
  r.read<std::uint32_t>();
  if (r.tag() != "WAVE") throw DataError("wav: not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::byte> data;

  while (r.has(8)) {
    const std::string id = r.tag();
    const auto size = r.read<std::uint32_t>();
    const std::size_t body = r.pos();
    // Some writers emit a bogus data size (streamed output); clamp to the buffer.
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (id == "fmt ") {
      if (size < 16) throw DataError("wav: fmt chunk too small");
      format = r.read<std::uint16_t>();
      channels = r.read<std::uint16_t>();
      rate = r.read<std::uint32_t>();
      r.read<std::uint32_t>();
      block_align = r.read<std::uint16_t>();
      bits = r.read<std::uint16_t>();
      if (format == kFormatExtensible && size >= 40) {
        r.read<std::uint16_t>();  // cbSize
        r.read<std::uint16_t>();  // valid bits
        r.read<std::uint32_t>();  // channel mask
        format = r.read<std::uint16_t>();  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data = bytes.subspan(body, avail);
    }
    r.seek(body + avail + (avail & 1));
  }

  if (!have_fmt) throw DataError("wav: missing fmt chunk");
  if (format != kFormatPcm) {
    throw DataError("wav: only linear PCM is accepted (format tag " + std::to_string(format) +
                    ")");
  }
  if (channels == 0 || rate == 0) throw DataError("wav: zero channels or sample rate");
  if (bits != 8 && bits != 16 && bits != 24 && bits != 32) {
    throw DataError("wav: unsupported bit depth " + std::to_string(bits));
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != channels * bytes_per_sample) throw DataError("wav: inconsistent block align");
  if (data.empty()) throw DataError("wav: no audio data");

  const std::size_t frames = data.size() / block_align;
  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::byte* frame = data.data() + i * block_align;
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += decode_sample(frame + c * bytes_per_sample, bits);
    w.samples[i] = acc / channels;
  }
  return w;
}

Waveform read_wav_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(std::as_bytes(std::span(raw)));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::byte> encode_wav_pcm16(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  std::vector<std::byte> out(44 + data_bytes);
  std::byte* p = out.data();
  auto put = [&p](const auto& v) {
    std::memcpy(p, &v, sizeof(v));
    p += sizeof(v);
  };
  auto put_tag = [&p](const char* t) {
    std::memcpy(p, t, 4);
    p += 4;
  };
  put_tag("RIFF");
  put(static_cast<std::uint32_t>(36 + data_bytes));
  put_tag("WAVE");
  put_tag("fmt ");
  put(std::uint32_t{16});
  put(kFormatPcm);
  put(std::uint16_t{1});
  put(static_cast<std::uint32_t>(w.sample_rate_hz));
  put(static_cast<std::uint32_t>(w.sample_rate_hz * 2));
  put(std::uint16_t{2});
  put(std::uint16_t{16});
  put_tag("data");
  put(data_bytes);
  for (double s : w.samples) {
    // same scale as the decoder, so a round trip is within half a step
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put(static_cast<std::int16_t>(q));
  }
  return out;
}

void write_wav_file(const std::filesystem::path& path, const Waveform& w) {
  const auto bytes = encode_wav_pcm16(w);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace tajweed
