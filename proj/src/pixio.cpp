#include "anchorgen/pixio.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace anchorgen {

namespace fs = std::filesystem;

namespace {

struct MatrixCoeffs {
  double kr;
  double kb;
};

MatrixCoeffs coeffs(ColorMatrix matrix) {
  switch (matrix) {
    case ColorMatrix::kBt709:
      return {0.2126, 0.0722};
    case ColorMatrix::kBt601:
      return {0.299, 0.114};
  }
  throw std::logic_error("unreachable");
}

std::uint8_t round_clamp(double v, int lo, int hi) {
  const long r = std::lround(v);  // half away from zero
  return static_cast<std::uint8_t>(std::clamp<long>(r, lo, hi));
}

void require_frame(const RgbFrame& f, const char* what) {
  if (!f.valid()) {
    throw std::invalid_argument(std::string(what) + ": invalid rgb frame");
  }
}

struct PngErrorCtx {
  char message[256] = "png failure";
};

extern "C" void png_error_fn(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngErrorCtx*>(png_get_error_ptr(png));
  if (ctx && msg) {
    std::snprintf(ctx->message, sizeof(ctx->message), "%s", msg);
  }
  png_longjmp(png, 1);
}

extern "C" void png_warn_fn(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngHeader {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

// The setjmp regions below hold no C++ objects; callers allocate between
// calls and throw on a false return.
bool png_read_header(png_structp png, png_infop info, std::FILE* f,
                     PngHeader* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_read_info(png, info);
  out->width = static_cast<int>(png_get_image_width(png, info));
  out->height = static_cast<int>(png_get_image_height(png, info));
  out->bit_depth = png_get_bit_depth(png, info);
  out->color_type = png_get_color_type(png, info);
  return true;
}

bool png_read_pixels(png_structp png, std::uint8_t* rgb, int width,
                     int height) {
  if (setjmp(png_jmpbuf(png))) return false;
  for (int y = 0; y < height; ++y) {
    png_read_row(png, rgb + static_cast<std::size_t>(y) * width * 3, nullptr);
  }
  png_read_end(png, nullptr);
  return true;
}

bool png_write_pixels(png_structp png, png_infop info, std::FILE* f,
                      const std::uint8_t* rgb, int width, int height) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png,
                  const_cast<png_bytep>(
                      rgb + static_cast<std::size_t>(y) * width * 3));
  }
  png_write_end(png, nullptr);
  return true;
}

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadState() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteState() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

}  // namespace

ColorMatrix parse_color_matrix(const std::string& name) {
  if (name == "bt709") return ColorMatrix::kBt709;
  if (name == "bt601") return ColorMatrix::kBt601;
  throw std::invalid_argument("unknown color matrix: " + name);
}

std::string to_string(ColorMatrix matrix) {
  return matrix == ColorMatrix::kBt709 ? "bt709" : "bt601";
}

std::pair<RgbFrame, PaddingRecord> pad_to_even(const RgbFrame& frame) {
  require_frame(frame, "pad_to_even");
  PaddingRecord rec;
  rec.original_width = frame.width;
  rec.original_height = frame.height;
  rec.cols_added = frame.width % 2;
  rec.rows_added = frame.height % 2;
  if (rec.cols_added == 0 && rec.rows_added == 0) {
    return {frame, rec};
  }

  RgbFrame out(rec.padded_width(), rec.padded_height());
  const Plane* src[3] = {&frame.r, &frame.g, &frame.b};
  Plane* dst[3] = {&out.r, &out.g, &out.b};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out.height; ++y) {
      const int sy = std::min(y, frame.height - 1);
      for (int x = 0; x < out.width; ++x) {
        const int sx = std::min(x, frame.width - 1);
        dst[c]->at(x, y) = src[c]->at(sx, sy);
      }
    }
  }
  return {std::move(out), rec};
}

Plane crop(const Plane& plane, const PaddingRecord& rec) {
  if (plane.width != rec.padded_width() ||
      plane.height != rec.padded_height()) {
    throw std::invalid_argument(
        "crop: plane " + std::to_string(plane.width) + "x" +
        std::to_string(plane.height) + " does not match padded dims " +
        std::to_string(rec.padded_width()) + "x" +
        std::to_string(rec.padded_height()));
  }
  if (rec.rows_added == 0 && rec.cols_added == 0) {
    return plane;
  }
  Plane out(rec.original_width, rec.original_height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = plane.at(x, y);
    }
  }
  return out;
}

RgbFrame crop(const RgbFrame& frame, const PaddingRecord& rec) {
  require_frame(frame, "crop");
  RgbFrame out;
  out.width = rec.original_width;
  out.height = rec.original_height;
  out.r = crop(frame.r, rec);
  out.g = crop(frame.g, rec);
  out.b = crop(frame.b, rec);
  return out;
}

Yuv420Frame rgb_to_yuv420(const RgbFrame& frame, ColorMatrix matrix) {
  require_frame(frame, "rgb_to_yuv420");
  if (frame.width % 2 != 0 || frame.height % 2 != 0) {
    throw std::invalid_argument("rgb_to_yuv420: odd dimensions, pad first");
  }
  const auto [kr, kb] = coeffs(matrix);
  const double kg = 1.0 - kr - kb;

  Yuv420Frame out(frame.width, frame.height);
  std::vector<double> cb_full(frame.r.samples.size());
  std::vector<double> cr_full(frame.r.samples.size());
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const double r = frame.r.at(x, y);
      const double g = frame.g.at(x, y);
      const double b = frame.b.at(x, y);
      const double ylin = kr * r + kg * g + kb * b;
      out.y.at(x, y) = round_clamp(16.0 + 219.0 * ylin / 255.0, 16, 235);
      const std::size_t i = static_cast<std::size_t>(y) * frame.width + x;
      cb_full[i] = 0.5 * (b - ylin) / (1.0 - kb);
      cr_full[i] = 0.5 * (r - ylin) / (1.0 - kr);
    }
  }
  for (int y = 0; y < frame.height / 2; ++y) {
    for (int x = 0; x < frame.width / 2; ++x) {
      const std::size_t i0 =
          static_cast<std::size_t>(2 * y) * frame.width + 2 * x;
      const std::size_t i1 = i0 + frame.width;
      const double cb =
          (cb_full[i0] + cb_full[i0 + 1] + cb_full[i1] + cb_full[i1 + 1]) /
          4.0;
      const double cr =
          (cr_full[i0] + cr_full[i0 + 1] + cr_full[i1] + cr_full[i1 + 1]) /
          4.0;
      out.u.at(x, y) = round_clamp(128.0 + 224.0 * cb / 255.0, 16, 240);
      out.v.at(x, y) = round_clamp(128.0 + 224.0 * cr / 255.0, 16, 240);
    }
  }
  return out;
}

RgbFrame yuv420_to_rgb(const Yuv420Frame& frame, ColorMatrix matrix) {
  if (!frame.valid()) {
    throw std::invalid_argument("yuv420_to_rgb: invalid frame");
  }
  const auto [kr, kb] = coeffs(matrix);
  const double kg = 1.0 - kr - kb;

  RgbFrame out(frame.width(), frame.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double ylin = (frame.y.at(x, y) - 16.0) * 255.0 / 219.0;
      const double cb =
          (frame.u.at(x / 2, y / 2) - 128.0) * 255.0 / 224.0;
      const double cr =
          (frame.v.at(x / 2, y / 2) - 128.0) * 255.0 / 224.0;
      const double r = ylin + 2.0 * (1.0 - kr) * cr;
      const double b = ylin + 2.0 * (1.0 - kb) * cb;
      const double g = (ylin - kr * r - kb * b) / kg;
      out.r.at(x, y) = round_clamp(r, 0, 255);
      out.g.at(x, y) = round_clamp(g, 0, 255);
      out.b.at(x, y) = round_clamp(b, 0, 255);
    }
  }
  return out;
}

std::int64_t yuv420_frame_bytes(int width, int height) {
  return static_cast<std::int64_t>(width) * height * 3 / 2;
}

std::vector<Yuv420Frame> read_yuv420(const fs::path& path, int width,
                                     int height, int frame_count) {
  if (width < 2 || height < 2 || width % 2 != 0 || height % 2 != 0) {
    throw std::invalid_argument("read_yuv420: dimensions must be even and "
                                ">= 2");
  }
  if (frame_count < 0) {
    throw std::invalid_argument("read_yuv420: negative frame count");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open: " + path.string());
  }
  const std::int64_t expected =
      yuv420_frame_bytes(width, height) * frame_count;
  const std::int64_t actual =
      static_cast<std::int64_t>(fs::file_size(path));
  if (actual != expected) {
    throw std::runtime_error("yuv size mismatch for " + path.string() +
                             ": expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(actual));
  }

  std::vector<Yuv420Frame> frames;
  frames.reserve(frame_count);
  for (int f = 0; f < frame_count; ++f) {
    Yuv420Frame frame(width, height);
    for (Plane* p : {&frame.y, &frame.u, &frame.v}) {
      in.read(reinterpret_cast<char*>(p->samples.data()),
              static_cast<std::streamsize>(p->samples.size()));
    }
    if (!in) {
      throw std::runtime_error("short read: " + path.string());
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

void write_yuv420(const std::vector<Yuv420Frame>& frames,
                  const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  for (const auto& frame : frames) {
    if (!frame.valid()) {
      throw std::invalid_argument("write_yuv420: invalid frame");
    }
    if (frame.width() != frames.front().width() ||
        frame.height() != frames.front().height()) {
      throw std::invalid_argument("write_yuv420: mixed frame dimensions");
    }
    for (const Plane* p : {&frame.y, &frame.u, &frame.v}) {
      out.write(reinterpret_cast<const char*>(p->samples.data()),
                static_cast<std::streamsize>(p->samples.size()));
    }
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

RgbFrame read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) {
    throw std::runtime_error("cannot open: " + path.string());
  }
  PngErrorCtx err;
  PngReadState state;
  state.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                     png_error_fn, png_warn_fn);
  if (!state.png) throw std::runtime_error("png_create_read_struct failed");
  state.info = png_create_info_struct(state.png);
  if (!state.info) throw std::runtime_error("png_create_info_struct failed");

  PngHeader header;
  if (!png_read_header(state.png, state.info, fp.get(), &header)) {
    throw std::runtime_error("png read " + path.string() + ": " +
                             err.message);
  }
  if (header.bit_depth != 8 || header.color_type != PNG_COLOR_TYPE_RGB) {
    throw std::runtime_error("png read " + path.string() +
                             ": not an 8-bit RGB png");
  }

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(header.width) *
                                header.height * 3);
  if (!png_read_pixels(state.png, rgb.data(), header.width, header.height)) {
    throw std::runtime_error("png read " + path.string() + ": " +
                             err.message);
  }

  RgbFrame frame(header.width, header.height);
  for (int y = 0; y < header.height; ++y) {
    const std::uint8_t* row =
        rgb.data() + static_cast<std::size_t>(y) * header.width * 3;
    for (int x = 0; x < header.width; ++x) {
      frame.r.at(x, y) = row[3 * x];
      frame.g.at(x, y) = row[3 * x + 1];
      frame.b.at(x, y) = row[3 * x + 2];
    }
  }
  return frame;
}

void write_png(const RgbFrame& frame, const fs::path& path) {
  require_frame(frame, "write_png");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  PngErrorCtx err;
  PngWriteState state;
  state.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                      png_error_fn, png_warn_fn);
  if (!state.png) throw std::runtime_error("png_create_write_struct failed");
  state.info = png_create_info_struct(state.png);
  if (!state.info) throw std::runtime_error("png_create_info_struct failed");

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(frame.width) *
                                frame.height * 3);
  for (int y = 0; y < frame.height; ++y) {
    std::uint8_t* row =
        rgb.data() + static_cast<std::size_t>(y) * frame.width * 3;
    for (int x = 0; x < frame.width; ++x) {
      row[3 * x] = frame.r.at(x, y);
      row[3 * x + 1] = frame.g.at(x, y);
      row[3 * x + 2] = frame.b.at(x, y);
    }
  }
  if (!png_write_pixels(state.png, state.info, fp.get(), rgb.data(),
                        frame.width, frame.height)) {
    throw std::runtime_error("png write " + path.string() + ": " +
                             err.message);
  }
  if (std::fflush(fp.get()) != 0) {
    throw std::runtime_error("png write " + path.string() + ": flush failed");
  }
}

namespace {

// Trailing digit run of the stem, or -1 when absent.
long long frame_index_of(const fs::path& file) {
  const std::string stem = file.stem().string();
  std::size_t pos = stem.size();
  while (pos > 0 && std::isdigit(static_cast<unsigned char>(stem[pos - 1]))) {
    --pos;
  }
  if (pos == stem.size()) return -1;
  return std::stoll(stem.substr(pos));
}

}  // namespace

std::vector<RgbFrame> read_png_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw std::runtime_error("no png files in " + dir.string());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a,
                                           const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });

  long long prev_index = -1;
  std::vector<RgbFrame> frames;
  frames.reserve(files.size());
  for (const auto& file : files) {
    const long long index = frame_index_of(file);
    if (index < 0) {
      throw std::runtime_error("png sequence: no frame index in " +
                               file.filename().string());
    }
    if (prev_index >= 0 && index != prev_index + 1) {
      throw std::runtime_error(
          "png sequence gap: missing frame index " +
          std::to_string(prev_index + 1) + " before " +
          file.filename().string());
    }
    prev_index = index;
    frames.push_back(read_png(file));
    if (frames.size() > 1 && (frames.back().width != frames.front().width ||
                              frames.back().height != frames.front().height)) {
      throw std::runtime_error("png sequence: " + file.filename().string() +
                               " has mismatched dimensions");
    }
  }
  return frames;
}

void write_png_sequence(const std::vector<RgbFrame>& frames,
                        const fs::path& dir,
                        const std::string& stem_prefix) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char index[16];
    std::snprintf(index, sizeof(index), "%04zu", i);
    write_png(frames[i], dir / (stem_prefix + index + ".png"));
  }
}

}  // namespace anchorgen
