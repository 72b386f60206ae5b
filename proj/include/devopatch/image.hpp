#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace devopatch {

/// Channel/height/width extents of a CHW image.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t elements() const { return pixels() * static_cast<std::size_t>(channels); }

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

/// Dense C×H×W image with intensities normalized to [0, 1], channel-major.
class Image {
 public:
  Image() = default;

  Image(Shape shape, float fill = 0.0f) : shape_(shape) {
    validate_shape(shape);
    check_intensity(fill);
    data_.assign(shape.elements(), fill);
  }

  Image(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    validate_shape(shape);
    if (data_.size() != shape.elements()) {
      throw std::invalid_argument("image data length " + std::to_string(data_.size()) + " does not match shape " +
                                  to_string(shape));
    }
    for (float v : data_) check_intensity(v);
  }

  static Image from_bytes(Shape shape, std::span<const std::uint8_t> bytes) {
    if (bytes.size() != shape.elements()) throw std::invalid_argument("byte buffer does not match image shape");
    std::vector<float> data(bytes.size());
    std::transform(bytes.begin(), bytes.end(), data.begin(), [](std::uint8_t b) { return b / 255.0f; });
    return Image(shape, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }

  float at(int c, int i, int j) const { return data_[index(c, i, j)]; }

  void set(int c, int i, int j, float v) {
    check_intensity(v);
    data_[index(c, i, j)] = v;
  }

  std::span<const float> data() const { return data_; }

  /// Copies every channel of pixel (i, j) from a same-shaped image.
  void copy_pixel_from(const Image& other, int i, int j) {
    for (int c = 0; c < channels(); ++c) data_[index(c, i, j)] = other.data_[other.index(c, i, j)];
  }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), to_byte);
    return out;
  }

  /// Rounds every intensity to the nearest multiple of 1/255.
  Image quantized() const {
    Image out = *this;
    for (float& v : out.data_) v = to_byte(v) / 255.0f;
    return out;
  }

  static std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int c, int i, int j) const {
    return (static_cast<std::size_t>(c) * shape_.height + static_cast<std::size_t>(i)) * shape_.width +
           static_cast<std::size_t>(j);
  }

  static void validate_shape(const Shape& s) {
    if (s.channels < 1 || s.height < 1 || s.width < 1) {
      throw std::invalid_argument("image shape must be positive, got " + to_string(s));
    }
  }

  static void check_intensity(float v) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("pixel intensity outside [0, 1]");
  }

  Shape shape_{};
  std::vector<float> data_;
};

inline void require_same_shape(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("image shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace devopatch
