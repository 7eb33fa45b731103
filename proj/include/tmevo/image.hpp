#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmevo {

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pixel-major storage: one row per pixel (row-major scan, y * width + x),
// one column per channel.
template <typename Scalar>
using PixelArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense H x W x C image with intensities in [0, 1].
///
/// Construction clamps, so every BasicImage satisfies the range invariant.
/// Values are never mutated in place by library code; operators that change
/// pixels build a new image.
template <typename Scalar>
class BasicImage {
 public:
  using scalar_type = Scalar;

  BasicImage() = default;

  BasicImage(int height, int width, int channels, Scalar fill = Scalar(0))
      : height_(height), width_(width), pixels_(PixelArray<Scalar>::Constant(checked_count(height, width), channels, fill)) {
    if (channels <= 0) throw std::invalid_argument("image channels must be positive");
    pixels_ = pixels_.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }

  BasicImage(int height, int width, PixelArray<Scalar> raw) : height_(height), width_(width), pixels_(std::move(raw)) {
    if (pixels_.rows() != checked_count(height, width) || pixels_.cols() <= 0) {
      throw DimensionMismatch("pixel array shape does not match image dimensions");
    }
    pixels_ = pixels_.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return static_cast<int>(pixels_.cols()); }
  Eigen::Index pixel_count() const { return pixels_.rows(); }
  bool empty() const { return pixels_.size() == 0; }

  Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width_ + x; }

  Scalar operator()(int x, int y, int c) const { return pixels_(index(x, y), c); }

  const PixelArray<Scalar>& pixels() const { return pixels_; }

  /// Copy of this image with one pixel replaced (values clamped).
  BasicImage with_pixel(int x, int y, const Eigen::Array<Scalar, 1, Eigen::Dynamic>& value) const {
    PixelArray<Scalar> raw = pixels_;
    raw.row(index(x, y)) = value;
    return BasicImage(height_, width_, std::move(raw));
  }

  bool same_shape(const BasicImage& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels() == other.channels();
  }

  friend bool operator==(const BasicImage& a, const BasicImage& b) {
    return a.same_shape(b) && (a.pixels_ == b.pixels_).all();
  }

 private:
  static Eigen::Index checked_count(int height, int width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("image dimensions must be positive");
    return static_cast<Eigen::Index>(height) * width;
  }

  int height_ = 0;
  int width_ = 0;
  PixelArray<Scalar> pixels_;
};

using Image = BasicImage<double>;

/// Axis-aligned box in pixel coordinates. A pixel (x, y) is covered when its
/// center (x + 0.5, y + 0.5) lies in [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  double area() const { return valid() ? (x_max - x_min) * (y_max - y_min) : 0.0; }
  bool covers(int x, int y) const {
    const double cx = x + 0.5;
    const double cy = y + 0.5;
    return cx >= x_min && cx < x_max && cy >= y_min && cy < y_max;
  }
  bool within(int height, int width) const {
    return valid() && x_min >= 0 && y_min >= 0 && x_max <= width && y_max <= height;
  }
  BoundingBox clipped(int height, int width) const {
    return {std::max(0.0, x_min), std::max(0.0, y_min), std::min<double>(width, x_max), std::min<double>(height, y_max)};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// One flag per pixel location, channel-agnostic.
class PixelMask {
 public:
  using Flags = Eigen::Array<bool, Eigen::Dynamic, 1>;

  PixelMask() = default;
  PixelMask(int height, int width) : height_(height), width_(width), flags_(Flags::Constant(Eigen::Index(height) * width, false)) {}
  PixelMask(int height, int width, Flags flags) : height_(height), width_(width), flags_(std::move(flags)) {
    if (flags_.size() != Eigen::Index(height) * width) throw DimensionMismatch("mask flag count does not match dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  Eigen::Index size() const { return flags_.size(); }
  Eigen::Index count() const { return flags_.count(); }
  bool none() const { return !flags_.any(); }

  bool operator[](Eigen::Index i) const { return flags_(i); }
  bool at(int x, int y) const { return flags_(Eigen::Index(y) * width_ + x); }
  void set(Eigen::Index i, bool value = true) { flags_(i) = value; }

  const Flags& flags() const { return flags_; }

  PixelMask operator|(const PixelMask& o) const { return {height_, width_, check(o).flags_ || o.flags_}; }
  PixelMask operator&(const PixelMask& o) const { return {height_, width_, check(o).flags_ && o.flags_}; }
  PixelMask operator~() const { return {height_, width_, !flags_}; }

  /// True when every flag set here is also set in `other`.
  bool subset_of(const PixelMask& other) const { return !(check(other).flags_ && !other.flags_).any(); }

  friend bool operator==(const PixelMask& a, const PixelMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && (a.flags_ == b.flags_).all();
  }

 private:
  const PixelMask& check(const PixelMask& o) const {
    if (o.height_ != height_ || o.width_ != width_) throw DimensionMismatch("mask dimensions differ");
    return *this;
  }

  int height_ = 0;
  int width_ = 0;
  Flags flags_;
};

/// Mask of pixels covered by at least one box.
PixelMask box_union_mask(int height, int width, std::span<const BoundingBox> boxes);

template <typename Scalar>
void require_same_shape(const BasicImage<Scalar>& a, const BasicImage<Scalar>& b) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch("image shapes differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) + "x" +
                            std::to_string(a.channels()) + " vs " + std::to_string(b.height()) + "x" +
                            std::to_string(b.width()) + "x" + std::to_string(b.channels()));
  }
}

/// Flags every pixel where any channel differs (exact comparison).
template <typename Scalar>
PixelMask diff_mask(const BasicImage<Scalar>& original, const BasicImage<Scalar>& candidate) {
  require_same_shape(original, candidate);
  return {original.height(), original.width(), (original.pixels() != candidate.pixels()).rowwise().any()};
}

/// Number of modified pixels; a pixel counts once however many channels changed.
template <typename Scalar>
Eigen::Index l0_norm(const BasicImage<Scalar>& original, const BasicImage<Scalar>& candidate) {
  return diff_mask(original, candidate).count();
}

/// Euclidean distance over all pixels and channels.
template <typename Scalar>
Scalar l2_norm(const BasicImage<Scalar>& original, const BasicImage<Scalar>& candidate) {
  require_same_shape(original, candidate);
  return (original.pixels() - candidate.pixels()).matrix().norm();
}

/// Clips an unbounded pixel array into [0, 1].
template <typename Derived>
auto clamp_image(int height, int width, const Eigen::ArrayBase<Derived>& raw) {
  using Scalar = typename Derived::Scalar;
  return BasicImage<Scalar>(height, width, PixelArray<Scalar>(raw.cwiseMax(Scalar(0)).cwiseMin(Scalar(1))));
}

/// Copy of `candidate` whose pixels flagged in `mask` are taken from `source`.
template <typename Scalar>
BasicImage<Scalar> revert_pixels(const BasicImage<Scalar>& candidate, const BasicImage<Scalar>& source, const PixelMask& mask) {
  require_same_shape(candidate, source);
  PixelArray<Scalar> raw = candidate.pixels();
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask[i]) raw.row(i) = source.pixels().row(i);
  }
  return BasicImage<Scalar>(candidate.height(), candidate.width(), std::move(raw));
}

/// Mean absolute channel difference over the pixels covered by `box`.
double mean_abs_diff(const Image& a, const Image& b, const BoundingBox& box);

// 8-bit quantization: v -> round(255 v), and back by division by 255.
std::vector<std::uint8_t> to_bytes(const Image& image);
Image from_bytes(int height, int width, int channels, std::span<const std::uint8_t> bytes);

/// Reads PNG (gray, gray+alpha, RGB or RGBA; alpha dropped) or binary PPM (P6).
Image load_image(const std::filesystem::path& path);
/// Writes by extension: .png or .ppm. PPM requires 3 channels.
void save_image(const Image& image, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

}  // namespace tmevo
