// Pixel containers shared by the metric and pixel-I/O layers.
#pragma once

#include <cstdint>
#include <vector>

namespace anchorgen {

// 8-bit single-component image, row-major, samples.size() == width*height.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;

  Plane() = default;
  Plane(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), samples(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const {
    return samples[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return samples[static_cast<std::size_t>(y) * width + x];
  }

  bool same_size(const Plane& other) const {
    return width == other.width && height == other.height;
  }
  bool valid() const {
    return width >= 1 && height >= 1 &&
           samples.size() == static_cast<std::size_t>(width) * height;
  }
  bool operator==(const Plane&) const = default;
};

// Full-resolution RGB triple; all planes share (width, height).
struct RgbFrame {
  int width = 0;
  int height = 0;
  Plane r, g, b;

  RgbFrame() = default;
  RgbFrame(int w, int h) : width(w), height(h), r(w, h), g(w, h), b(w, h) {}

  bool valid() const {
    return r.valid() && r.width == width && r.height == height &&
           g.same_size(r) && b.same_size(r);
  }
  bool operator==(const RgbFrame&) const = default;
};

// Planar 4:2:0: even luma dimensions, chroma exactly half size.
struct Yuv420Frame {
  Plane y, u, v;

  Yuv420Frame() = default;
  Yuv420Frame(int w, int h) : y(w, h), u(w / 2, h / 2), v(w / 2, h / 2) {}

  int width() const { return y.width; }
  int height() const { return y.height; }

  bool valid() const {
    return y.valid() && u.valid() && v.valid() && y.width % 2 == 0 &&
           y.height % 2 == 0 && u.width == y.width / 2 &&
           u.height == y.height / 2 && v.same_size(u);
  }
  bool operator==(const Yuv420Frame&) const = default;
};

// How a frame was grown to even dimensions, so decode-side cropping is
// self-describing.
struct PaddingRecord {
  int rows_added = 0;
  int cols_added = 0;
  int original_width = 0;
  int original_height = 0;

  int padded_width() const { return original_width + cols_added; }
  int padded_height() const { return original_height + rows_added; }
  bool operator==(const PaddingRecord&) const = default;
};

}  // namespace anchorgen
