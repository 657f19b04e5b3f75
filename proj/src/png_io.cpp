#include "targan/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "targan/errors.hpp"

namespace targan::png {
namespace {

struct FileCloser {
  void operator()(FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write_gray(const std::filesystem::path& path, int64_t height, int64_t width, int bit_depth,
                std::span<const uint16_t> values) {
  if (bit_depth != 8 && bit_depth != 16) throw IoError("unsupported PNG bit depth");
  if (static_cast<int64_t>(values.size()) != height * width)
    throw ShapeError("PNG buffer size does not match height*width");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int64_t bytes_per_px = bit_depth / 8;
  std::vector<png_byte> row(static_cast<size_t>(width * bytes_per_px));
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      const uint16_t v = values[r * width + c];
      if (bit_depth == 16) {
        row[2 * c] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * c + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        row[c] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RawGray read_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("missing file: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("corrupt image (not a PNG): " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt image: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  RawGray out;
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (out.bit_depth != 8 && out.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG format (need 8/16-bit grayscale): " + path.string());
  }
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> row(rowbytes);
  out.values.resize(static_cast<size_t>(out.height * out.width));
  for (int64_t r = 0; r < out.height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int64_t c = 0; c < out.width; ++c) {
      out.values[r * out.width + c] =
          out.bit_depth == 16 ? static_cast<uint16_t>((row[2 * c] << 8) | row[2 * c + 1]) : row[c];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  std::vector<uint16_t> buf(img.values.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = encode_u16(img.values[i]);
  write_gray(path, img.height, img.width, 16, buf);
}

Image read_image(const std::filesystem::path& path) {
  RawGray raw = read_gray(path);
  if (raw.bit_depth != 16) throw IoError("expected a 16-bit image: " + path.string());
  Image img(raw.height, raw.width);
  for (size_t i = 0; i < raw.values.size(); ++i) img.values[i] = decode_u16(raw.values[i]);
  return img;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  std::vector<uint16_t> buf(mask.values.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = mask.values[i] ? 255 : 0;
  write_gray(path, mask.height, mask.width, 8, buf);
}

Mask read_mask(const std::filesystem::path& path) {
  RawGray raw = read_gray(path);
  if (raw.bit_depth != 8) throw IoError("expected an 8-bit mask: " + path.string());
  Mask m(raw.height, raw.width);
  for (size_t i = 0; i < raw.values.size(); ++i) {
    if (raw.values[i] != 0 && raw.values[i] != 255)
      throw IoError("corrupt mask (values must be 0 or 255): " + path.string());
    m.values[i] = raw.values[i] ? 1 : 0;
  }
  return m;
}

}  // namespace targan::png
