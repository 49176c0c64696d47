#include <random>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "doctest.h"
#include "rlrf/error.hpp"
#include "rlrf/metrics.hpp"

using namespace rlrf;

namespace {

// Reference SSIM written against OpenCV primitives.
double cv_ssim(const RasterImage& a, const RasterImage& b) {
  auto luma = [](const RasterImage& img) {
    cv::Mat m(img.height(), img.width(), CV_64FC3);
    std::copy(img.data().begin(), img.data().end(), m.ptr<double>());
    cv::Mat g;
    cv::transform(m, g, cv::Matx13d(0.299, 0.587, 0.114));
    return g;
  };
  const cv::Mat x = luma(a), y = luma(b);
  auto blur = [](const cv::Mat& m) {
    cv::Mat out;
    cv::GaussianBlur(m, out, {11, 11}, 1.5, 1.5, cv::BORDER_REFLECT_101);
    return out;
  };
  const double c1 = 1e-4, c2 = 9e-4;
  cv::Mat mx = blur(x), my = blur(y);
  cv::Mat vx = blur(x.mul(x)) - mx.mul(mx), vy = blur(y.mul(y)) - my.mul(my), cov = blur(x.mul(y)) - mx.mul(my);
  cv::Mat num = (2 * mx.mul(my) + c1).mul(2 * cov + c2);
  cv::Mat den = (mx.mul(mx) + my.mul(my) + c1).mul(vx + vy + c2);
  cv::Mat ratio;
  cv::divide(num, den, ratio);
  return cv::mean(ratio)[0];
}

RasterImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RasterImage img(w, h, 3);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

// Smooth blobs look more like rendered graphics than white noise does.
RasterImage blobs(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RasterImage img = RasterImage::filled(w, h, {u(rng), u(rng), u(rng)});
  for (int k = 0; k < 3; ++k) {
    int x0 = static_cast<int>(u(rng) * w), y0 = static_cast<int>(u(rng) * h);
    int x1 = x0 + 1 + static_cast<int>(u(rng) * (w - x0)), y1 = y0 + 1 + static_cast<int>(u(rng) * (h - y0));
    Rgb c{u(rng), u(rng), u(rng)};
    for (int y = y0; y < std::min(y1, h); ++y)
      for (int x = x0; x < std::min(x1, w); ++x)
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch];
  }
  return img;
}

}  // namespace

TEST_CASE("mse scale") {
  auto black = RasterImage::filled(4, 4, {0, 0, 0});
  auto white = RasterImage::filled(4, 4, {1, 1, 1});
  CHECK(mse(black, black) == 0.0);
  CHECK(mse(black, white) == doctest::Approx(100.0));
  RasterImage half = black;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) half.at(x, y, c) = 1.0;
  CHECK(mse(half, black) == doctest::Approx(50.0));
  CHECK_THROWS_AS(mse(black, RasterImage::filled(4, 5, {0, 0, 0})), DimensionMismatch);
}

TEST_CASE("ssim matches an OpenCV reference") {
  std::mt19937_64 rng(17);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 16 + static_cast<int>(rng() % 40), h = 16 + static_cast<int>(rng() % 40);
    RasterImage a = trial % 2 ? random_image(rng, w, h) : blobs(rng, w, h);
    RasterImage b = trial % 3 ? blobs(rng, w, h) : random_image(rng, w, h);
    worst = std::max(worst, std::abs(ssim(a, b) - cv_ssim(a, b)));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("ssim extremes") {
  std::mt19937_64 rng(3);
  auto a = blobs(rng, 32, 32);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  auto noise = random_image(rng, 32, 32);
  CHECK(ssim(a, noise) < 0.5);
  CHECK_THROWS_AS(ssim(a, RasterImage::filled(31, 32, {0, 0, 0})), DimensionMismatch);
}

TEST_CASE("code efficiency sign") {
  std::vector<std::size_t> gt{100, 120}, shorter{80, 100}, longer{130, 150};
  CHECK(code_efficiency(gt, shorter) == doctest::Approx(20.0));
  CHECK(code_efficiency(gt, gt) == 0.0);
  CHECK(code_efficiency(gt, longer) == doctest::Approx(-30.0));
  CHECK_THROWS_AS(code_efficiency(gt, std::vector<std::size_t>{1}), LengthMismatch);
}

TEST_CASE("best of n") {
  auto target = RasterImage::filled(4, 4, {0, 0, 0});
  auto at = [](double v) { return RasterImage::filled(4, 4, {v, v, v}); };
  std::vector<RasterImage> c{at(0.3), at(0.1), at(0.2)};
  CHECK(best_of_n(c, target) == 1);
  std::vector<RasterImage> ties{at(0.1), at(0.1)};
  CHECK(best_of_n(ties, target) == 0);
  CHECK_THROWS_AS(best_of_n(std::span<const RasterImage>{}, target), std::invalid_argument);

  // The best of n candidates never loses to the first one alone.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RasterImage> pool;
    for (int i = 0; i < 5; ++i) pool.push_back(random_image(rng, 6, 6));
    auto goal = random_image(rng, 6, 6);
    CHECK(mse(pool[best_of_n(pool, goal)], goal) <= mse(pool[0], goal));
  }
}
