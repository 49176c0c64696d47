#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rlrf {

using Rgb = std::array<double, 3>;

// Dense row-major H x W x C buffer with values in [0, 1].
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, double fill = 0.0);
  RasterImage(int width, int height, int channels, std::vector<double> data);

  static RasterImage filled(int width, int height, const Rgb& color);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const RasterImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Luma: 0.299 R + 0.587 G + 0.114 B. Single-channel input is returned as is.
RasterImage to_grayscale(const RasterImage& img);

// Copies a single-channel image into three identical channels.
RasterImage replicate_channels(const RasterImage& gray);

// Bilinear resampling with half-pixel centers and edge clamping.
RasterImage resize_bilinear(const RasterImage& img, int width, int height);

// Box-filtered downsample; each output pixel is the area average of its footprint.
RasterImage resize_area(const RasterImage& img, int width, int height);

// Scales so that min(width, height) == target, keeping the aspect ratio.
RasterImage resize_shortest_side(const RasterImage& img, int target);

// 8-bit PNG codec. Gray and RGB are written as is; alpha is composited over white on read.
std::vector<std::uint8_t> encode_png(const RasterImage& img);
RasterImage decode_png(std::span<const std::uint8_t> bytes);
RasterImage read_png(const std::filesystem::path& path);
void write_png(const RasterImage& img, const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace rlrf
