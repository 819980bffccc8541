// Bit-exact pixel plumbing: planar I420 files, RGB<->YUV 4:2:0 conversion,
// PNG frame sequences, and odd-dimension padding/cropping.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "anchorgen/frame.hpp"

namespace anchorgen {

enum class ColorMatrix { kBt709, kBt601 };
ColorMatrix parse_color_matrix(const std::string& name);
std::string to_string(ColorMatrix matrix);

// Replicates the last row/column once when a dimension is odd, so the frame
// can carry 4:2:0 chroma.
std::pair<RgbFrame, PaddingRecord> pad_to_even(const RgbFrame& frame);

// Removes padded rows/columns; crop(pad_to_even(x)) == x bit-exactly.
RgbFrame crop(const RgbFrame& frame, const PaddingRecord& rec);
Plane crop(const Plane& plane, const PaddingRecord& rec);

// Limited-range conversion (Y in [16,235], chroma in [16,240]), rounding
// half away from zero. Chroma is formed at full resolution, 2x2 mean-pooled,
// then rounded. Requires even dimensions.
Yuv420Frame rgb_to_yuv420(const RgbFrame& frame,
                          ColorMatrix matrix = ColorMatrix::kBt709);

// Inverse matrix with nearest-neighbour chroma upsampling; clamped to
// [0, 255].
RgbFrame yuv420_to_rgb(const Yuv420Frame& frame,
                       ColorMatrix matrix = ColorMatrix::kBt709);

std::int64_t yuv420_frame_bytes(int width, int height);

// Strict planar I420: per frame Y then U then V, 8-bit, frames concatenated.
// The file size must equal frame_count * yuv420_frame_bytes exactly.
std::vector<Yuv420Frame> read_yuv420(const std::filesystem::path& path,
                                     int width, int height, int frame_count);
void write_yuv420(const std::vector<Yuv420Frame>& frames,
                  const std::filesystem::path& path);

// 8-bit RGB PNG only; anything else is an error.
RgbFrame read_png(const std::filesystem::path& path);
void write_png(const RgbFrame& frame, const std::filesystem::path& path);

// A directory of numbered PNGs, lexicographic order = temporal order. The
// trailing index in each stem must be contiguous; a gap is an error naming
// the missing index.
std::vector<RgbFrame> read_png_sequence(const std::filesystem::path& dir);
void write_png_sequence(const std::vector<RgbFrame>& frames,
                        const std::filesystem::path& dir,
                        const std::string& stem_prefix = "frame_");

}  // namespace anchorgen
