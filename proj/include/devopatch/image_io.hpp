#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "devopatch/image.hpp"

namespace devopatch {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

inline int png_color_type(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
  }
  throw ImageIoError("PNG supports 1 to 4 channels, got " + std::to_string(channels));
}

/// CHW float image -> interleaved HWC bytes.
inline std::vector<std::uint8_t> interleave(const Image& img) {
  std::vector<std::uint8_t> out(img.shape().elements());
  const int c_n = img.channels();
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j)
      for (int c = 0; c < c_n; ++c)
        out[(static_cast<std::size_t>(i) * img.width() + j) * c_n + c] = Image::to_byte(img.at(c, i, j));
  return out;
}

inline Image deinterleave(Shape shape, std::span<const std::uint8_t> hwc) {
  std::vector<std::uint8_t> chw(shape.elements());
  for (int i = 0; i < shape.height; ++i)
    for (int j = 0; j < shape.width; ++j)
      for (int c = 0; c < shape.channels; ++c)
        chw[(static_cast<std::size_t>(c) * shape.height + i) * shape.width + j] =
            hwc[(static_cast<std::size_t>(i) * shape.width + j) * shape.channels + c];
  return Image::from_bytes(shape, chw);
}

}  // namespace detail

/// Lossless 8-bit PNG encoding (gray, gray+alpha, RGB or RGBA by channel count).
inline std::vector<std::uint8_t> encode_png(const Image& img) {
  const int color_type = detail::png_color_type(img.channels());
  std::vector<std::uint8_t> hwc = detail::interleave(img);
  std::vector<std::uint8_t> out;
  std::string err;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("PNG encode failed: " + err);
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
  for (int i = 0; i < img.height(); ++i) png_write_row(png, hwc.data() + stride * i);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

/// Decodes any PNG to 8-bit samples; palette images expand to RGB(A), 16-bit strips to 8.
inline Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw ImageIoError("not a PNG stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> hwc;
  std::vector<png_bytep> rows;  // declared before setjmp so a longjmp never skips a destructor
  detail::PngReadCursor cursor{bytes, 0};
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("PNG decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t len) {
    auto* cur = static_cast<detail::PngReadCursor*>(png_get_io_ptr(p));
    if (cur->pos + len > cur->bytes.size()) png_error(p, "truncated PNG stream");
    std::memcpy(data, cur->bytes.data() + cur->pos, len);
    cur->pos += len;
  });
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  hwc.resize(stride * height);
  rows.resize(height);
  for (int i = 0; i < height; ++i) rows[i] = hwc.data() + stride * i;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return detail::deinterleave(Shape{channels, height, width}, hwc);
}

/// Binary PPM (P6, maxval 255) for 3-channel images, PGM (P5) for single-channel ones.
inline std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw ImageIoError("PNM needs 1 or 3 channels");
  const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width()) +
                             " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto hwc = detail::interleave(img);
  out.insert(out.end(), hwc.begin(), hwc.end());
  return out;
}

inline Image decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P6" && magic != "P5") throw ImageIoError("unsupported PNM magic '" + magic + "'");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ImageIoError("malformed PNM header");
  }
  if (maxval != 255) throw ImageIoError("only maxval 255 PNM files are supported");
  ++pos;  // single whitespace before the raster
  const Shape shape{magic == "P6" ? 3 : 1, height, width};
  if (width < 1 || height < 1 || bytes.size() < pos + shape.elements()) throw ImageIoError("truncated PNM raster");
  return detail::deinterleave(shape, bytes.subspan(pos, shape.elements()));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Reads PNG or binary PNM, detected by magic bytes.
inline Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) return decode_pnm(bytes);
  return decode_png(bytes);
}

/// Writes PNM for .ppm/.pgm extensions, PNG otherwise.
inline void save_image(const std::filesystem::path& path, const Image& img) {
  const auto ext = path.extension().string();
  write_file_bytes(path, ext == ".ppm" || ext == ".pgm" ? encode_pnm(img) : encode_png(img));
}

}  // namespace devopatch
