#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace targan {

struct Modality {
  int id = 0;
  std::string name;

  friend bool operator==(const Modality&, const Modality&) = default;
};

/// Single-channel image, row-major, values in [-1, 1].
/// Background (no tissue) is exactly -1.
struct Image {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> values;

  Image() = default;
  Image(int64_t h, int64_t w, float fill = -1.0f) : height(h), width(w), values(h * w, fill) {}
  Image(int64_t h, int64_t w, std::vector<float> v);

  float& at(int64_t r, int64_t c) { return values[r * width + c]; }
  float at(int64_t r, int64_t c) const { return values[r * width + c]; }
  int64_t size() const { return height * width; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary mask with values in {0, 1}.
struct Mask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> values;

  Mask() = default;
  Mask(int64_t h, int64_t w, uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}
  Mask(int64_t h, int64_t w, std::vector<uint8_t> v);

  uint8_t& at(int64_t r, int64_t c) { return values[r * width + c]; }
  uint8_t at(int64_t r, int64_t c) const { return values[r * width + c]; }
  int64_t size() const { return height * width; }
  int64_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Affine map of raw intensities onto [-1, 1]: lo -> -1, hi -> +1. Values
/// outside [lo, hi] are clamped first. Throws ConfigError when hi <= lo.
Image normalize_intensity(std::span<const double> raw, int64_t height, int64_t width, double lo,
                          double hi);
double normalize_value(double raw, double lo, double hi);
double denormalize_value(double v, double lo, double hi);

/// Keeps x inside the mask and sets everything else to the -1 background.
/// Equivalent to multiplying by y in [0,1] intensity space and renormalizing.
Image extract_target_area(const Image& x, const Mask& y);

inline constexpr double kDefaultForegroundEps = 0.02;

/// 1 where x > -1 + eps.
Mask foreground_binarize(const Image& x, double eps = kDefaultForegroundEps);

// 16-bit storage: v encodes (v / 65535) * 2 - 1.
uint16_t encode_u16(float x);
float decode_u16(uint16_t v);
/// Rounds every value to the nearest 16-bit storable level.
Image quantize_u16(const Image& x);

}  // namespace targan
