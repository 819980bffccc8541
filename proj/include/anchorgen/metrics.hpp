// MS-SSIM and auxiliary PSNR on 8-bit planes, with frame- and
// sequence-level aggregation. The scale pyramid is kept in real arithmetic;
// border handling is valid-only (no padding).
#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "anchorgen/frame.hpp"

namespace anchorgen {

// Real-valued image used across the metric pyramid, (height x width).
using ImageF = Eigen::ArrayXXd;

struct MsSsimParams {
  int levels = 5;
  std::vector<double> scale_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;

  void validate() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  // Smallest plane dimension ms_ssim accepts: window * 2^(levels-1).
  int min_dimension() const { return window << (levels - 1); }
};

ImageF to_image(const Plane& p);

struct LcsResult {
  double luminance;
  double contrast_structure;
};

// Spatial means of the per-window luminance and contrast-structure terms,
// Gaussian-weighted, valid positions only.
LcsResult ssim_lcs(const ImageF& a, const ImageF& b,
                   const MsSsimParams& params = {});
LcsResult ssim_lcs(const Plane& a, const Plane& b,
                   const MsSsimParams& params = {});

// 2x2 mean pooling; odd trailing row/column dropped.
ImageF downsample2(const ImageF& img);

// Multi-scale score: cs means at every scale, luminance mean at the coarsest
// only, each raised to its scale weight; negative means clamp to 0 first.
// Planes smaller than params.min_dimension() are an error.
double ms_ssim(const ImageF& a, const ImageF& b,
               const MsSsimParams& params = {});
double ms_ssim(const Plane& a, const Plane& b, const MsSsimParams& params = {});

enum class ChannelMode { kRgbMean, kLumaOnly };
ChannelMode parse_channel_mode(const std::string& name);
std::string to_string(ChannelMode mode);

// Per-frame score = mean of per-channel ms_ssim; sequence score = arithmetic
// mean over frames. The parallel frame map is order-preserving: results are
// bit-identical for any thread count.
double sequence_score(const std::vector<RgbFrame>& ref,
                      const std::vector<RgbFrame>& dist,
                      const MsSsimParams& params = {}, int threads = 1);

// Luma-only variant operating directly on Y planes.
double sequence_score(const std::vector<Plane>& ref,
                      const std::vector<Plane>& dist,
                      const MsSsimParams& params = {}, int threads = 1);

// 10*log10(255^2 / MSE); +infinity for identical planes.
double psnr(const Plane& a, const Plane& b);

}  // namespace anchorgen
