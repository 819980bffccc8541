#include <doctest.h>

#include <cmath>
#include <random>

#include "anchorgen/metrics.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace anchorgen;

TEST_CASE("params validation") {
  MsSsimParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.min_dimension() == 176);

  MsSsimParams bad_len = p;
  bad_len.levels = 4;
  CHECK_THROWS_AS(bad_len.validate(), std::invalid_argument);

  MsSsimParams bad_sum = p;
  bad_sum.scale_weights[0] += 0.01;
  CHECK_THROWS_AS(bad_sum.validate(), std::invalid_argument);

  MsSsimParams even_window = p;
  even_window.window = 10;
  CHECK_THROWS_AS(even_window.validate(), std::invalid_argument);
}

TEST_CASE("ssim_lcs identity and closed forms") {
  std::mt19937 rng(11);

  SUBCASE("identical planes give exactly (1, 1)") {
    const Plane a = testutil::random_plane(rng, 32, 24);
    const auto r = ssim_lcs(a, a);
    CHECK(std::abs(r.luminance - 1.0) <= 1e-12);
    CHECK(std::abs(r.contrast_structure - 1.0) <= 1e-12);
  }

  SUBCASE("constant planes 128 vs 129 follow the zero-variance form") {
    const Plane a(16, 16, 128);
    const Plane b(16, 16, 129);
    const auto r = ssim_lcs(a, b);
    const double c1 = 6.5025;
    const double expected_l =
        (2.0 * 128 * 129 + c1) / (128.0 * 128 + 129.0 * 129 + c1);
    CHECK(std::abs(r.luminance - expected_l) <= 1e-9);
    CHECK(std::abs(r.luminance - 0.999970) <= 1e-5);
    CHECK(std::abs(r.contrast_structure - 1.0) <= 1e-12);
  }

  SUBCASE("64x64 random planes match the direct reference") {
    const Plane a = testutil::random_plane(rng, 64, 64);
    const Plane b = testutil::noisy_plane(a, rng, 12);
    const auto fast = ssim_lcs(a, b);
    const auto naive = oracle::naive_ssim_lcs(to_image(a), to_image(b));
    CHECK(std::abs(fast.luminance - naive.luminance) <= 1e-9);
    CHECK(std::abs(fast.contrast_structure - naive.contrast_structure) <=
          1e-9);
  }

  SUBCASE("dimension mismatch and tiny planes are errors") {
    const Plane a(16, 16, 0);
    const Plane b(16, 15, 0);
    CHECK_THROWS_AS(ssim_lcs(a, b), std::invalid_argument);
    const Plane tiny(8, 8, 0);
    CHECK_THROWS_AS(ssim_lcs(tiny, tiny), std::invalid_argument);
  }
}

TEST_CASE("downsample2") {
  SUBCASE("constant plane stays constant") {
    ImageF img(4, 4);
    img.setConstant(100.0);
    const ImageF out = downsample2(img);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 2);
    CHECK(out.minCoeff() == 100.0);
    CHECK(out.maxCoeff() == 100.0);
  }
  SUBCASE("checkerboard averages to the midpoint") {
    ImageF img(2, 2);
    img << 0, 255, 255, 0;
    const ImageF out = downsample2(img);
    CHECK(out(0, 0) == 127.5);
  }
  SUBCASE("odd trailing row and column are dropped") {
    ImageF img(5, 5);
    img.setZero();
    const ImageF out = downsample2(img);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 2);
  }
  SUBCASE("too small is an error") {
    ImageF img(1, 4);
    img.setZero();
    CHECK_THROWS_AS(downsample2(img), std::invalid_argument);
  }
}

TEST_CASE("ms_ssim identity, symmetry, and bounds") {
  std::mt19937 rng(5);

  SUBCASE("identity at 720p") {
    const Plane a = testutil::random_plane(rng, 1280, 720);
    CHECK(std::abs(ms_ssim(a, a) - 1.0) <= 1e-12);
  }

  SUBCASE("symmetry and range on noisy pairs") {
    const Plane a = testutil::random_plane(rng, 256, 256);
    const Plane b = testutil::noisy_plane(a, rng, 10);
    const double ab = ms_ssim(a, b);
    const double ba = ms_ssim(b, a);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(ab > 0.0);
    CHECK(ab <= 1.0);
  }

  SUBCASE("planes below window * 2^(levels-1) are rejected") {
    const Plane small(128, 128, 7);
    CHECK_THROWS_WITH_AS(ms_ssim(small, small), doctest::Contains("176"),
                         std::invalid_argument);
  }
}

TEST_CASE("ms_ssim matches the direct reference implementation") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const Plane a = testutil::random_plane(rng, 256, 256);
    const Plane b = testutil::noisy_plane(a, rng, 8);
    CAPTURE(trial);
    CHECK(std::abs(ms_ssim(a, b) - oracle::naive_ms_ssim(a, b)) <= 1e-9);
  }
}

TEST_CASE("more noise scores strictly lower") {
  std::mt19937 rng(23);
  const Plane a = testutil::random_plane(rng, 256, 256);
  const double s4 = ms_ssim(a, testutil::noisy_plane(a, rng, 4));
  const double s8 = ms_ssim(a, testutil::noisy_plane(a, rng, 8));
  CHECK(s4 > s8);
}

TEST_CASE("sequence_score aggregates frames") {
  std::mt19937 rng(29);
  const int w = 192, h = 192;

  std::vector<RgbFrame> ref;
  std::vector<RgbFrame> dist;
  for (int i = 0; i < 3; ++i) {
    RgbFrame f(w, h);
    f.r = testutil::random_plane(rng, w, h);
    f.g = testutil::random_plane(rng, w, h);
    f.b = testutil::random_plane(rng, w, h);
    RgbFrame d = f;
    d.r = testutil::noisy_plane(f.r, rng, 4 + 4 * i);
    d.g = testutil::noisy_plane(f.g, rng, 4 + 4 * i);
    d.b = testutil::noisy_plane(f.b, rng, 4 + 4 * i);
    ref.push_back(std::move(f));
    dist.push_back(std::move(d));
  }

  SUBCASE("identical sequences score 1") {
    CHECK(std::abs(sequence_score(ref, ref) - 1.0) <= 1e-12);
  }

  SUBCASE("score equals the mean of per-frame scores") {
    double mean = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      mean += (ms_ssim(ref[i].r, dist[i].r) + ms_ssim(ref[i].g, dist[i].g) +
               ms_ssim(ref[i].b, dist[i].b)) /
              3.0;
    }
    mean /= static_cast<double>(ref.size());
    CHECK(std::abs(sequence_score(ref, dist) - mean) <= 1e-12);
  }

  SUBCASE("parallel map is bit-identical for any worker count") {
    const double t1 = sequence_score(ref, dist, {}, 1);
    const double t2 = sequence_score(ref, dist, {}, 2);
    const double t8 = sequence_score(ref, dist, {}, 8);
    CHECK(t1 == t2);
    CHECK(t1 == t8);
  }

  SUBCASE("luma-only variant") {
    std::vector<Plane> y_ref{ref[0].r, ref[1].r};
    std::vector<Plane> y_dist{dist[0].r, dist[1].r};
    const double expected =
        (ms_ssim(y_ref[0], y_dist[0]) + ms_ssim(y_ref[1], y_dist[1])) / 2.0;
    CHECK(std::abs(sequence_score(y_ref, y_dist) - expected) <= 1e-12);
  }

  SUBCASE("mismatched counts and empty sequences are errors") {
    std::vector<RgbFrame> short_seq{ref[0]};
    CHECK_THROWS_AS(sequence_score(ref, short_seq), std::invalid_argument);
    CHECK_THROWS_AS(sequence_score(std::vector<RgbFrame>{},
                                   std::vector<RgbFrame>{}),
                    std::invalid_argument);
  }
}

TEST_CASE("channel mode names") {
  CHECK(parse_channel_mode("rgb-mean") == ChannelMode::kRgbMean);
  CHECK(parse_channel_mode("luma-only") == ChannelMode::kLumaOnly);
  CHECK(to_string(ChannelMode::kRgbMean) == "rgb-mean");
  CHECK_THROWS_AS(parse_channel_mode("rgb"), std::invalid_argument);
}

TEST_CASE("psnr") {
  std::mt19937 rng(31);

  SUBCASE("identical planes hit the infinity sentinel") {
    const Plane a = testutil::random_plane(rng, 16, 16);
    CHECK(std::isinf(psnr(a, a)));
  }
  SUBCASE("all-black vs all-white is 0 dB") {
    const Plane black(8, 8, 0);
    const Plane white(8, 8, 255);
    CHECK(std::abs(psnr(black, white)) <= 1e-12);
  }
  SUBCASE("random pair matches the direct MSE computation") {
    const Plane a = testutil::random_plane(rng, 32, 32);
    const Plane b = testutil::random_plane(rng, 32, 32);
    double sse = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      const double d = double(a.samples[i]) - double(b.samples[i]);
      sse += d * d;
    }
    const double expected = 10.0 * std::log10(255.0 * 255.0 /
                                              (sse / a.samples.size()));
    CHECK(std::abs(psnr(a, b) - expected) <= 1e-9);
  }
  SUBCASE("dimension mismatch is an error") {
    CHECK_THROWS_AS(psnr(Plane(4, 4, 0), Plane(4, 5, 0)),
                    std::invalid_argument);
  }
}
