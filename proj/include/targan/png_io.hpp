#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "targan/image.hpp"

namespace targan::png {

struct RawGray {
  int64_t height = 0;
  int64_t width = 0;
  int bit_depth = 8;
  std::vector<uint16_t> values;  // 8-bit data is widened, not rescaled
};

void write_gray(const std::filesystem::path& path, int64_t height, int64_t width, int bit_depth,
                std::span<const uint16_t> values);
RawGray read_gray(const std::filesystem::path& path);

/// 16-bit grayscale image file.
void write_image(const std::filesystem::path& path, const Image& img);
Image read_image(const std::filesystem::path& path);

/// 8-bit grayscale, 0 or 255.
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

}  // namespace targan::png
