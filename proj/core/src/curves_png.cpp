// Learning-curve chart rasterizer. Deliberately tiny: axes, gridlines,
// polylines and a 5x7 bitmap font for labels, written out with libpng.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <string_view>
#include <vector>

#include "tajweed/error.hpp"
#include "tajweed/evaluator.hpp"

namespace tajweed::eval {
namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kGrid{225, 225, 225};
constexpr Rgb kTrain{31, 119, 180};
constexpr Rgb kTest{214, 39, 40};
constexpr std::array<Rgb, kNumRules> kRuleColors{{{44, 160, 44}, {148, 103, 189}, {255, 127, 14}}};

// 5x7 glyphs, one byte per row, low 5 bits used, MSB of those = leftmost pixel.
struct Glyph {
  char c;
  std::array<std::uint8_t, 7> rows;
};

constexpr std::array<Glyph, 33> kFont{{
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}}, {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}}, {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}}, {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}}, {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
}};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      for (int t = 0; t < thickness; ++t) {
        set(x0, y0 + t, c);
        set(x0 + t, y0, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void rect(int x, int y, int w, int h, Rgb c) {
    for (int j = y; j < y + h; ++j)
      for (int i = x; i < x + w; ++i) set(i, j, c);
  }

  void text(int x, int y, std::string_view s, Rgb c, int scale = 2) {
    for (char ch : s) {
      const auto it = std::find_if(kFont.begin(), kFont.end(), [ch](const Glyph& g) { return g.c == ch; });
      if (it != kFont.end()) {
        for (int r = 0; r < 7; ++r)
          for (int col = 0; col < 5; ++col)
            if (it->rows[r] & (0x10 >> col)) rect(x + col * scale, y + r * scale, scale, scale, c);
      }
      x += 6 * scale;
    }
  }

  void write_png(const std::filesystem::path& path) const {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw RuntimeFailure("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw RuntimeFailure("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h_; ++y) {
      png_write_row(png, const_cast<png_bytep>(&px_[static_cast<std::size_t>(y) * w_ * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

std::string tick_label(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, std::abs(v) >= 10 ? "%.0f" : "%.2f", v);
  return buf;
}

struct Series {
  std::vector<double> y;
  Rgb color;
  std::string_view name;
};

void panel(Canvas& cv, int x, int y, int w, int h, std::string_view title, const std::vector<int>& epochs,
           const std::vector<Series>& series, double lo, double hi) {
  if (hi - lo < 1e-12) {
    hi = lo + 1.0;
  }
  const int left = x + 60, right = x + w - 20, top = y + 30, bottom = y + h - 30;
  auto px = [&](double e) {
    const double e0 = epochs.front(), e1 = std::max<double>(epochs.back(), e0 + 1);
    return left + static_cast<int>(std::lround((e - e0) / (e1 - e0) * (right - left)));
  };
  auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * (bottom - top))); };

  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    cv.line(left, py(v), right, py(v), kGrid);
    cv.text(x + 4, py(v) - 7, tick_label(v), kBlack, 2);
  }
  cv.line(left, top, left, bottom, kBlack);
  cv.line(left, bottom, right, bottom, kBlack);
  cv.text(left, y + 6, title, kBlack, 2);
  cv.text(right - 5 * 12, bottom + 8, "EPOCH", kBlack, 2);

  int legend_x = left + static_cast<int>(title.size()) * 12 + 30;
  for (const auto& s : series) {
    for (std::size_t i = 1; i < s.y.size(); ++i) {
      cv.line(px(epochs[i - 1]), py(s.y[i - 1]), px(epochs[i]), py(s.y[i]), s.color, 2);
    }
    if (s.y.size() == 1) cv.rect(px(epochs[0]) - 2, py(s.y[0]) - 2, 5, 5, s.color);
    cv.rect(legend_x, y + 8, 14, 10, s.color);
    cv.text(legend_x + 18, y + 6, s.name, kBlack, 2);
    legend_x += 18 + static_cast<int>(s.name.size()) * 12 + 16;
  }
}

}  // namespace

void render_learning_curves_png(std::span<const EpochMetrics> metrics, const std::filesystem::path& path,
                                int width, int height) {
  if (metrics.empty()) throw DataError("render_learning_curves_png: no epochs");
  Canvas cv(width, height);
  std::vector<int> epochs;
  Series train{{}, kTrain, "TRAIN"}, test{{}, kTest, "TEST"};
  std::vector<Series> acc;
  static constexpr std::array<std::string_view, kNumRules> kNames{"MAD", "GHUNNAH", "IKHFAA"};
  for (std::size_t j = 0; j < kNumRules; ++j) acc.push_back({{}, kRuleColors[j], kNames[j]});

  double loss_hi = 0.0;
  double acc_lo = 1.0;
  for (const auto& m : metrics) {
    epochs.push_back(m.epoch);
    train.y.push_back(m.train_loss);
    test.y.push_back(m.test_loss);
    loss_hi = std::max({loss_hi, m.train_loss, m.test_loss});
    for (std::size_t j = 0; j < kNumRules; ++j) {
      acc[j].y.push_back(m.test_accuracy[j]);
      acc_lo = std::min(acc_lo, m.test_accuracy[j]);
    }
  }
  panel(cv, 0, 0, width, height / 2, "LOSS", epochs, {train, test}, 0.0, loss_hi * 1.05);
  panel(cv, 0, height / 2, width, height / 2, "TEST ACCURACY", epochs, acc,
        std::floor(acc_lo * 10.0) / 10.0, 1.0);
  cv.write_png(path);
}

}  // namespace tajweed::eval
