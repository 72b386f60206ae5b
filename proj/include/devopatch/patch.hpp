#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "devopatch/image.hpp"

namespace devopatch {

/// Paired key-points (i1, j1), (i2, j2): opposite corners of an inclusive rectangle.
/// Coordinates are signed so that mutation may leave the image domain before repair.
struct Candidate {
  long i1 = 0;
  long j1 = 0;
  long i2 = 0;
  long j2 = 0;

  bool valid_for(int h, int w) const { return 0 <= i1 && i1 < i2 && i2 < h && 0 <= j1 && j1 < j2 && j2 < w; }

  /// Rectangle area with inclusive bounds; meaningful only for valid candidates.
  long area() const { return (i2 - i1 + 1) * (j2 - j1 + 1); }

  std::array<long, 4> as_array() const { return {i1, j1, i2, j2}; }

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

inline Candidate operator+(const Candidate& a, const Candidate& b) {
  return {a.i1 + b.i1, a.j1 + b.j1, a.i2 + b.i2, a.j2 + b.j2};
}

inline Candidate operator-(const Candidate& a, const Candidate& b) {
  return {a.i1 - b.i1, a.j1 - b.j1, a.i2 - b.i2, a.j2 - b.j2};
}

inline Candidate operator*(long k, const Candidate& c) { return {k * c.i1, k * c.j1, k * c.i2, k * c.j2}; }

inline std::ostream& operator<<(std::ostream& os, const Candidate& c) {
  return os << "(" << c.i1 << "," << c.j1 << "," << c.i2 << "," << c.j2 << ")";
}

/// Per-pixel H×W location mask, shared by all channels.
class Mask {
 public:
  Mask(int height, int width) : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int i, int j) const { return bits_[static_cast<std::size_t>(i) * width_ + j] != 0; }
  void set(int i, int j, bool on) { bits_[static_cast<std::size_t>(i) * width_ + j] = on ? 1 : 0; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_;
  int width_;
  std::vector<unsigned char> bits_;
};

/// Rectangle indicator over [i1, i2] × [j1, j2]; all-zero when the candidate is not valid for h×w.
inline Mask make_mask(const Candidate& c, int h, int w) {
  if (h < 2 || w < 2) throw std::invalid_argument("mask needs h, w >= 2");
  Mask m(h, w);
  if (!c.valid_for(h, w)) return m;
  for (long i = c.i1; i <= c.i2; ++i)
    for (long j = c.j1; j <= c.j2; ++j) m.set(static_cast<int>(i), static_cast<int>(j), true);
  return m;
}

inline std::size_t patch_pixel_area(const Mask& m) {
  std::size_t n = 0;
  for (int i = 0; i < m.height(); ++i)
    for (int j = 0; j < m.width(); ++j) n += m.at(i, j) ? 1 : 0;
  return n;
}

/// (1 − M) ⊙ x + M ⊙ x_t, with M broadcast over channels.
inline Image apply_patch(const Image& x, const Image& x_t, const Mask& m) {
  require_same_shape(x, x_t);
  if (m.height() != x.height() || m.width() != x.width()) throw std::invalid_argument("mask does not match image");
  Image out = x;
  for (int i = 0; i < m.height(); ++i)
    for (int j = 0; j < m.width(); ++j)
      if (m.at(i, j)) out.copy_pixel_from(x_t, i, j);
  return out;
}

}  // namespace devopatch
