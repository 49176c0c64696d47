#include <algorithm>
#include <cmath>
#include <vector>

#include "rlrf/error.hpp"
#include "rlrf/raster.hpp"

namespace rlrf {

void EdgeParams::validate() const {
  if (!(canny_low < canny_high)) throw ConfigError("EdgeParams: canny_low must be < canny_high");
  if (dilate_kernel < 1 || dilate_kernel % 2 == 0) throw ConfigError("EdgeParams: dilate_kernel must be odd");
  if (dilate_iterations < 0) throw ConfigError("EdgeParams: dilate_iterations must be >= 0");
  if (blur_size < 1 || blur_size % 2 == 0) throw ConfigError("EdgeParams: blur_size must be odd");
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

int replicate(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

RasterImage canny_edges(const RasterImage& gray, double low, double high) {
  if (gray.channels() != 1) throw DimensionMismatch("canny_edges expects a single-channel image");
  const int w = gray.width(), h = gray.height();
  std::vector<double> gx(static_cast<std::size_t>(w) * h), gy(gx.size()), mag(gx.size());
  auto px = [&](int x, int y) { return gray.at(replicate(x, w), replicate(y, h)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                  (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      double dy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                  (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = dx / 4.0;
      gy[i] = dy / 4.0;
      mag[i] = std::hypot(gx[i], gy[i]);
    }
  }

  auto m_at = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return mag[static_cast<std::size_t>(y) * w + x];
  };

  // 0 = suppressed, 1 = weak candidate, 2 = strong.
  std::vector<unsigned char> label(mag.size(), 0);
  const double tan22 = std::tan(22.5 * 3.14159265358979323846 / 180.0);
  const double tan67 = std::tan(67.5 * 3.14159265358979323846 / 180.0);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * w + x;
      double m = mag[i];
      if (m <= low) continue;
      double ax = std::abs(gx[i]), ay = std::abs(gy[i]);
      bool is_max;
      if (ay <= ax * tan22) {
        is_max = m > m_at(x - 1, y) && m >= m_at(x + 1, y);
      } else if (ay >= ax * tan67) {
        is_max = m > m_at(x, y - 1) && m >= m_at(x, y + 1);
      } else if ((gx[i] > 0) == (gy[i] > 0)) {
        is_max = m > m_at(x - 1, y - 1) && m >= m_at(x + 1, y + 1);
      } else {
        is_max = m > m_at(x + 1, y - 1) && m >= m_at(x - 1, y + 1);
      }
      if (!is_max) continue;
      if (m > high) {
        label[i] = 2;
        stack.push_back(static_cast<int>(i));
      } else {
        label[i] = 1;
      }
    }
  }

  // Hysteresis: weak pixels 8-connected to strong ones become edges.
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    int x = i % w, y = i / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (label[j] == 1) {
          label[j] = 2;
          stack.push_back(static_cast<int>(j));
        }
      }
    }
  }

  RasterImage out(w, h, 1);
  auto data = out.data();
  for (std::size_t i = 0; i < label.size(); ++i) data[i] = label[i] == 2 ? 1.0 : 0.0;
  return out;
}

RasterImage dilate(const RasterImage& img, int kernel, int iterations) {
  RasterImage cur = img;
  const int r = kernel / 2;
  for (int it = 0; it < iterations; ++it) {
    RasterImage next(cur.width(), cur.height(), cur.channels());
    for (int y = 0; y < cur.height(); ++y) {
      for (int x = 0; x < cur.width(); ++x) {
        for (int c = 0; c < cur.channels(); ++c) {
          double v = 0.0;
          for (int dy = -r; dy <= r; ++dy) {
            int yy = y + dy;
            if (yy < 0 || yy >= cur.height()) continue;
            for (int dx = -r; dx <= r; ++dx) {
              int xx = x + dx;
              if (xx < 0 || xx >= cur.width()) continue;
              v = std::max(v, cur.at(xx, yy, c));
            }
          }
          next.at(x, y, c) = v;
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

RasterImage gaussian_blur(const RasterImage& img, int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ConfigError("gaussian_blur: size must be odd");
  if (sigma <= 0) sigma = size / 6.0;
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2 * sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;

  const int w = img.width(), h = img.height(), ch = img.channels();
  RasterImage tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(reflect101(x + i, w), y, c);
        tmp.at(x, y, c) = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(x, reflect101(y + i, h), c);
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

RasterImage canny_pipeline(const RasterImage& img, const EdgeParams& p) {
  p.validate();
  RasterImage edges = canny_edges(to_grayscale(img), p.canny_low, p.canny_high);
  edges = dilate(edges, p.dilate_kernel, p.dilate_iterations);
  edges = gaussian_blur(edges, p.blur_size, p.blur_sigma);
  for (auto& v : edges.data()) v = std::clamp(v, 0.0, 1.0);
  return edges;
}

}  // namespace rlrf
