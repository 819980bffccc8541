#include "anchorgen/metrics.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace anchorgen {

namespace {

void require_plane(const Plane& p, const char* what) {
  if (!p.valid()) {
    throw std::invalid_argument(std::string(what) + ": invalid plane");
  }
}

void require_same_size(const ImageF& a, const ImageF& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
}

Eigen::VectorXd gaussian_window(int window, double sigma) {
  Eigen::VectorXd g(window);
  const double c = (window - 1) / 2.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    g(i) = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  g /= g.sum();
  return g;
}

// Separable valid-mode filter: vertical then horizontal pass.
ImageF filter_valid(const ImageF& in, const Eigen::VectorXd& g) {
  const int w = static_cast<int>(g.size());
  const Eigen::Index out_rows = in.rows() - w + 1;
  const Eigen::Index out_cols = in.cols() - w + 1;
  ImageF tmp(out_rows, in.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r) {
    tmp.row(r) = g(0) * in.row(r);
    for (int k = 1; k < w; ++k) {
      tmp.row(r) += g(k) * in.row(r + k);
    }
  }
  ImageF out(out_rows, out_cols);
  for (Eigen::Index c = 0; c < out_cols; ++c) {
    out.col(c) = g(0) * tmp.col(c);
    for (int k = 1; k < w; ++k) {
      out.col(c) += g(k) * tmp.col(c + k);
    }
  }
  return out;
}

// Runs fn(i) for i in [0, n) on `threads` workers; any index is computed by
// exactly one worker so results are independent of scheduling.
template <typename Fn>
void parallel_index_map(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(threads, n);
  pool.reserve(count);
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double clamp0(double v) { return v < 0.0 ? 0.0 : v; }

}  // namespace

void MsSsimParams::validate() const {
  if (levels < 1) {
    throw std::invalid_argument("ms-ssim params: levels must be >= 1");
  }
  if (static_cast<int>(scale_weights.size()) != levels) {
    throw std::invalid_argument(
        "ms-ssim params: scale_weights length must equal levels");
  }
  double sum = 0.0;
  for (double w : scale_weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("ms-ssim params: weights must sum to 1");
  }
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("ms-ssim params: window must be odd");
  }
  if (!(sigma > 0) || !(dynamic_range > 0)) {
    throw std::invalid_argument("ms-ssim params: sigma and dynamic_range "
                                "must be positive");
  }
}

ImageF to_image(const Plane& p) {
  require_plane(p, "to_image");
  ImageF img(p.height, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      img(y, x) = static_cast<double>(p.at(x, y));
    }
  }
  return img;
}

LcsResult ssim_lcs(const ImageF& a, const ImageF& b,
                   const MsSsimParams& params) {
  params.validate();
  require_same_size(a, b, "ssim_lcs");
  if (a.rows() < params.window || a.cols() < params.window) {
    throw std::invalid_argument("ssim_lcs: plane smaller than window");
  }

  const Eigen::VectorXd g = gaussian_window(params.window, params.sigma);
  const ImageF mu_a = filter_valid(a, g);
  const ImageF mu_b = filter_valid(b, g);
  const ImageF var_a = filter_valid(a * a, g) - mu_a * mu_a;
  const ImageF var_b = filter_valid(b * b, g) - mu_b * mu_b;
  const ImageF cov = filter_valid(a * b, g) - mu_a * mu_b;

  const double c1 = params.c1();
  const double c2 = params.c2();
  const ImageF l =
      (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
  const ImageF cs = (2.0 * cov + c2) / (var_a + var_b + c2);
  return {l.mean(), cs.mean()};
}

LcsResult ssim_lcs(const Plane& a, const Plane& b,
                   const MsSsimParams& params) {
  require_plane(a, "ssim_lcs");
  require_plane(b, "ssim_lcs");
  return ssim_lcs(to_image(a), to_image(b), params);
}

ImageF downsample2(const ImageF& img) {
  if (img.rows() < 2 || img.cols() < 2) {
    throw std::invalid_argument("downsample2: dimension < 2");
  }
  const Eigen::Index rows = img.rows() / 2;
  const Eigen::Index cols = img.cols() / 2;
  ImageF out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = (img(2 * r, 2 * c) + img(2 * r, 2 * c + 1) +
                   img(2 * r + 1, 2 * c) + img(2 * r + 1, 2 * c + 1)) /
                  4.0;
    }
  }
  return out;
}

double ms_ssim(const ImageF& a, const ImageF& b, const MsSsimParams& params) {
  params.validate();
  require_same_size(a, b, "ms_ssim");
  const int min_dim =
      static_cast<int>(std::min(a.rows(), a.cols()));
  if (min_dim < params.min_dimension()) {
    throw std::invalid_argument(
        "ms_ssim: min dimension " + std::to_string(min_dim) + " below " +
        std::to_string(params.min_dimension()) +
        " required for " + std::to_string(params.levels) + " levels");
  }

  ImageF cur_a = a;
  ImageF cur_b = b;
  double score = 1.0;
  for (int level = 0; level < params.levels; ++level) {
    const LcsResult r = ssim_lcs(cur_a, cur_b, params);
    const double w = params.scale_weights[level];
    if (level + 1 == params.levels) {
      score *= std::pow(clamp0(r.luminance), w);
    }
    score *= std::pow(clamp0(r.contrast_structure), w);
    if (level + 1 < params.levels) {
      cur_a = downsample2(cur_a);
      cur_b = downsample2(cur_b);
    }
  }
  return score;
}

double ms_ssim(const Plane& a, const Plane& b, const MsSsimParams& params) {
  require_plane(a, "ms_ssim");
  require_plane(b, "ms_ssim");
  return ms_ssim(to_image(a), to_image(b), params);
}

ChannelMode parse_channel_mode(const std::string& name) {
  if (name == "rgb-mean") return ChannelMode::kRgbMean;
  if (name == "luma-only") return ChannelMode::kLumaOnly;
  throw std::invalid_argument("unknown channel mode: " + name);
}

std::string to_string(ChannelMode mode) {
  return mode == ChannelMode::kRgbMean ? "rgb-mean" : "luma-only";
}

double sequence_score(const std::vector<RgbFrame>& ref,
                      const std::vector<RgbFrame>& dist,
                      const MsSsimParams& params, int threads) {
  if (ref.empty()) {
    throw std::invalid_argument("sequence_score: empty sequence");
  }
  if (ref.size() != dist.size()) {
    throw std::invalid_argument("sequence_score: frame count mismatch");
  }
  const int n = static_cast<int>(ref.size());
  std::vector<double> frame_scores(n);
  parallel_index_map(n, threads, [&](int i) {
    const RgbFrame& x = ref[i];
    const RgbFrame& y = dist[i];
    if (!x.valid() || !y.valid() || x.width != y.width ||
        x.height != y.height) {
      throw std::invalid_argument("sequence_score: frame " +
                                  std::to_string(i) + " dimension mismatch");
    }
    frame_scores[i] = (ms_ssim(x.r, y.r, params) + ms_ssim(x.g, y.g, params) +
                       ms_ssim(x.b, y.b, params)) /
                      3.0;
  });
  double sum = 0.0;
  for (double s : frame_scores) sum += s;
  return sum / n;
}

double sequence_score(const std::vector<Plane>& ref,
                      const std::vector<Plane>& dist,
                      const MsSsimParams& params, int threads) {
  if (ref.empty()) {
    throw std::invalid_argument("sequence_score: empty sequence");
  }
  if (ref.size() != dist.size()) {
    throw std::invalid_argument("sequence_score: frame count mismatch");
  }
  const int n = static_cast<int>(ref.size());
  std::vector<double> frame_scores(n);
  parallel_index_map(n, threads, [&](int i) {
    frame_scores[i] = ms_ssim(ref[i], dist[i], params);
  });
  double sum = 0.0;
  for (double s : frame_scores) sum += s;
  return sum / n;
}

double psnr(const Plane& a, const Plane& b) {
  require_plane(a, "psnr");
  require_plane(b, "psnr");
  if (!a.same_size(b)) {
    throw std::invalid_argument("psnr: dimension mismatch");
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d =
        static_cast<double>(a.samples[i]) - static_cast<double>(b.samples[i]);
    sse += d * d;
  }
  if (sse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double mse = sse / static_cast<double>(a.samples.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace anchorgen
