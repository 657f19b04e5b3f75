#include "targan/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "targan/errors.hpp"

namespace targan {

Image::Image(int64_t h, int64_t w, std::vector<float> v) : height(h), width(w), values(std::move(v)) {
  if (static_cast<int64_t>(values.size()) != h * w)
    throw ShapeError("image buffer has " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(h * w));
}

Mask::Mask(int64_t h, int64_t w, std::vector<uint8_t> v) : height(h), width(w), values(std::move(v)) {
  if (static_cast<int64_t>(values.size()) != h * w)
    throw ShapeError("mask buffer has " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(h * w));
  for (auto& m : values) {
    if (m > 1) throw ShapeError("mask values must be 0 or 1");
  }
}

int64_t Mask::count() const {
  return std::accumulate(values.begin(), values.end(), int64_t{0});
}

double normalize_value(double raw, double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("invalid intensity range: hi must exceed lo");
  const double c = std::clamp(raw, lo, hi);
  return (c - lo) / (hi - lo) * 2.0 - 1.0;
}

double denormalize_value(double v, double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("invalid intensity range: hi must exceed lo");
  return (v + 1.0) / 2.0 * (hi - lo) + lo;
}

Image normalize_intensity(std::span<const double> raw, int64_t height, int64_t width, double lo,
                          double hi) {
  if (!(hi > lo)) throw ConfigError("invalid intensity range: hi must exceed lo");
  if (static_cast<int64_t>(raw.size()) != height * width)
    throw ShapeError("raw buffer size does not match height*width");
  Image out(height, width);
  for (size_t i = 0; i < raw.size(); ++i)
    out.values[i] = static_cast<float>(normalize_value(raw[i], lo, hi));
  return out;
}

Image extract_target_area(const Image& x, const Mask& y) {
  if (x.height != y.height || x.width != y.width)
    throw ShapeError("image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                     " does not match mask " + std::to_string(y.height) + "x" +
                     std::to_string(y.width));
  Image r(x.height, x.width, -1.0f);
  for (int64_t i = 0; i < x.size(); ++i)
    if (y.values[i]) r.values[i] = x.values[i];
  return r;
}

Mask foreground_binarize(const Image& x, double eps) {
  Mask m(x.height, x.width);
  const double thr = -1.0 + eps;
  for (int64_t i = 0; i < x.size(); ++i) m.values[i] = x.values[i] > thr ? 1 : 0;
  return m;
}

uint16_t encode_u16(float x) {
  const double u = (std::clamp(static_cast<double>(x), -1.0, 1.0) + 1.0) / 2.0;
  return static_cast<uint16_t>(std::lround(u * 65535.0));
}

float decode_u16(uint16_t v) { return static_cast<float>(v / 65535.0 * 2.0 - 1.0); }

Image quantize_u16(const Image& x) {
  Image q = x;
  for (auto& v : q.values) v = decode_u16(encode_u16(v));
  return q;
}

}  // namespace targan
