#include "rlrf/metrics.hpp"

#include <stdexcept>

#include "rlrf/error.hpp"
#include "rlrf/raster.hpp"

namespace rlrf {

double mse(const RasterImage& a, const RasterImage& b) {
  if (!a.same_shape(b)) throw DimensionMismatch("mse: images differ in shape");
  if (a.empty()) throw DimensionMismatch("mse: empty images");
  auto x = a.data();
  auto y = b.data();
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return 100.0 * s / static_cast<double>(x.size());
}

double ssim(const RasterImage& a, const RasterImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw DimensionMismatch("ssim: images differ in size");
  if (a.empty()) throw DimensionMismatch("ssim: empty images");
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const RasterImage x = to_grayscale(a), y = to_grayscale(b);
  RasterImage xx = x, yy = y, xy = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx.data()[i] = x.data()[i] * x.data()[i];
    yy.data()[i] = y.data()[i] * y.data()[i];
    xy.data()[i] = x.data()[i] * y.data()[i];
  }
  const auto mx = gaussian_blur(x, kWindow, kSigma), my = gaussian_blur(y, kWindow, kSigma);
  const auto sxx = gaussian_blur(xx, kWindow, kSigma), syy = gaussian_blur(yy, kWindow, kSigma),
             sxy = gaussian_blur(xy, kWindow, kSigma);
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ux = mx.data()[i], uy = my.data()[i];
    const double vx = sxx.data()[i] - ux * ux, vy = syy.data()[i] - uy * uy, cov = sxy.data()[i] - ux * uy;
    total += ((2 * ux * uy + c1) * (2 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(x.size());
}

double code_efficiency(std::span<const std::size_t> gt, std::span<const std::size_t> pred) {
  if (gt.size() != pred.size()) throw LengthMismatch("code_efficiency: list lengths differ");
  if (gt.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) s += static_cast<double>(gt[i]) - static_cast<double>(pred[i]);
  return s / static_cast<double>(gt.size());
}

std::size_t best_of_n(std::span<const RasterImage> candidates, const RasterImage& target) {
  if (candidates.empty()) throw std::invalid_argument("best_of_n: no candidates");
  std::size_t best = 0;
  double best_err = mse(candidates[0], target);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double e = mse(candidates[i], target);
    if (e < best_err) {
      best_err = e;
      best = i;
    }
  }
  return best;
}

}  // namespace rlrf
