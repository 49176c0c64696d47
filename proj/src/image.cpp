#include "rlrf/image.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "rlrf/error.hpp"

namespace rlrf {

RasterImage::RasterImage(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw Error("RasterImage: invalid shape");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3) ||
      data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error("RasterImage: data length does not match shape");
  }
}

RasterImage RasterImage::filled(int width, int height, const Rgb& color) {
  RasterImage img(width, height, 3);
  for (std::size_t i = 0; i < img.data_.size(); i += 3) {
    img.data_[i] = color[0];
    img.data_[i + 1] = color[1];
    img.data_[i + 2] = color[2];
  }
  return img;
}

RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels() == 1) return img;
  RasterImage out(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
  }
  return out;
}

RasterImage replicate_channels(const RasterImage& gray) {
  if (gray.channels() == 3) return gray;
  RasterImage out(gray.width(), gray.height(), 3);
  auto src = gray.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
  }
  return out;
}

RasterImage resize_bilinear(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1) throw Error("resize: target dimensions must be positive");
  if (width == img.width() && height == img.height()) return img;
  const int channels = img.channels();
  RasterImage out(width, height, channels);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, img.width() - 1);
      double wx = fx - x0;
      for (int c = 0; c < channels; ++c) {
        double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
        double bottom = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
        out.at(x, y, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

RasterImage resize_area(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1) throw Error("resize: target dimensions must be positive");
  const int channels = img.channels();
  RasterImage out(width, height, channels);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double y_lo = y * sy, y_hi = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double x_lo = x * sx, x_hi = (x + 1) * sx;
      double acc[3] = {0, 0, 0};
      double total = 0;
      for (int iy = static_cast<int>(y_lo); iy < std::min<int>(std::ceil(y_hi), img.height()); ++iy) {
        double wy = std::min<double>(iy + 1, y_hi) - std::max<double>(iy, y_lo);
        if (wy <= 0) continue;
        for (int ix = static_cast<int>(x_lo); ix < std::min<int>(std::ceil(x_hi), img.width()); ++ix) {
          double wx = std::min<double>(ix + 1, x_hi) - std::max<double>(ix, x_lo);
          if (wx <= 0) continue;
          for (int c = 0; c < channels; ++c) acc[c] += wx * wy * img.at(ix, iy, c);
          total += wx * wy;
        }
      }
      for (int c = 0; c < channels; ++c) out.at(x, y, c) = acc[c] / total;
    }
  }
  return out;
}

RasterImage resize_shortest_side(const RasterImage& img, int target) {
  if (target < 1) throw Error("resize_shortest_side: target must be >= 1");
  const int shortest = std::min(img.width(), img.height());
  if (shortest == target) return img;
  const double scale = static_cast<double>(target) / shortest;
  int w = img.width() == shortest ? target : static_cast<int>(std::lround(img.width() * scale));
  int h = img.height() == shortest ? target : static_cast<int>(std::lround(img.height() * scale));
  return resize_bilinear(img, std::max(w, 1), std::max(h, 1));
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

  std::vector<std::uint8_t> pixels(img.size());
  auto src = img.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
  }

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(std::string("png decode failed: ") + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_color white{255, 255, 255};
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, &white, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(std::string("png decode failed: ") + image.message);
  }
  const int channels = gray ? 1 : 3;
  std::vector<double> data(pixels.size());
  std::transform(pixels.begin(), pixels.end(), data.begin(), [](std::uint8_t v) { return v / 255.0; });
  return RasterImage(static_cast<int>(image.width), static_cast<int>(image.height), channels, std::move(data));
}

RasterImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void write_png(const RasterImage& img, const std::filesystem::path& path) {
  auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

}  // namespace rlrf
