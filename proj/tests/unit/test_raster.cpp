#include <cmath>
#include <random>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "doctest.h"
#include "rlrf/error.hpp"
#include "rlrf/raster.hpp"

using namespace rlrf;

namespace {

cv::Mat to_mat(const RasterImage& img) {
  cv::Mat m(img.height(), img.width(), CV_64FC(img.channels()));
  std::copy(img.data().begin(), img.data().end(), m.ptr<double>());
  return m;
}

RasterImage from_mat(const cv::Mat& m) {
  cv::Mat d;
  m.convertTo(d, CV_64F);
  d = d.clone();
  return RasterImage(d.cols, d.rows, d.channels(),
                     std::vector<double>(d.ptr<double>(), d.ptr<double>() + d.total() * d.channels()));
}

RasterImage white_square(int size, int lo, int hi) {
  RasterImage img(size, size, 1, 0.0);
  for (int y = lo; y < hi; ++y)
    for (int x = lo; x < hi; ++x) img.at(x, y) = 1.0;
  return img;
}

RasterImage random_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RasterImage img(w, h, c);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

bool render_error_kind(const std::string& svg, RenderError::Kind kind) {
  try {
    render_svg({svg}, {64, 64});
  } catch (const RenderError& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace

TEST_CASE("tiny viewBox renders at the reference size") {
  auto img = render_svg({"<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1 1\"/>"}, {512, 512});
  CHECK(img.width() == 512);
  CHECK(img.height() == 512);
  CHECK(img.channels() == 3);
}

TEST_CASE("full-canvas fill covers every pixel") {
  auto img = render_svg({"<svg viewBox=\"0 0 10 10\"><rect width=\"10\" height=\"10\" fill=\"red\"/></svg>"}, {64, 48});
  REQUIRE(img.width() == 64);
  // Non-square canvas letterboxes, so check the square 48x48 centre.
  for (int y = 0; y < 48; ++y)
    for (int x = 8; x < 56; ++x) {
      CHECK(img.at(x, y, 0) == doctest::Approx(1.0));
      CHECK(img.at(x, y, 1) == doctest::Approx(0.0));
      CHECK(img.at(x, y, 2) == doctest::Approx(0.0));
    }
  auto square = render_svg({"<svg viewBox=\"0 0 10 10\"><rect width=\"10\" height=\"10\" fill=\"red\"/></svg>"}, {32, 32});
  for (int i = 0; i < 32 * 32; ++i) {
    CHECK(square.data()[3 * i] == 1.0);
    CHECK(square.data()[3 * i + 1] == 0.0);
    CHECK(square.data()[3 * i + 2] == 0.0);
  }
}

TEST_CASE("aspect mismatch letterboxes with the background") {
  RenderSpec spec{40, 40, {0.0, 0.0, 1.0}};
  auto img = render_svg({"<svg viewBox=\"0 0 20 10\"><rect width=\"20\" height=\"10\" fill=\"#00ff00\"/></svg>"}, spec);
  CHECK(img.at(20, 2, 2) == doctest::Approx(1.0));   // band above
  CHECK(img.at(20, 37, 2) == doctest::Approx(1.0));  // band below
  CHECK(img.at(20, 20, 1) == doctest::Approx(1.0));  // content
  CHECK(img.at(20, 20, 2) == doctest::Approx(0.0));
}

TEST_CASE("malformed and unsupported input raise instead of rendering blank") {
  CHECK(render_error_kind("<svg><rect", RenderError::Kind::parse));
  CHECK(render_error_kind("not svg at all", RenderError::Kind::parse));
  CHECK(render_error_kind("<svg><text x=\"1\" y=\"5\">hi</text></svg>", RenderError::Kind::unsupported));
  CHECK(render_error_kind("<svg><image href=\"http://example.com/a.png\"/></svg>", RenderError::Kind::unsupported));
  CHECK(render_error_kind("<svg><script>alert(1)</script></svg>", RenderError::Kind::unsupported));
  CHECK_THROWS_AS(render_svg({"<svg/>"}, {0, 10}), ConfigError);
}

TEST_CASE("output size ignores any declared viewBox or size") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-50, 50), s(0.01, 400);
  std::uniform_int_distribution<int> dim(1, 80);
  for (int i = 0; i < 200; ++i) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg width=\"%d\" height=\"%d\" viewBox=\"%g %g %g %g\"><circle cx=\"0\" cy=\"0\" r=\"3\"/></svg>",
                  dim(rng), dim(rng), u(rng), u(rng), s(rng), s(rng));
    RenderSpec spec{dim(rng), dim(rng)};
    auto img = render_svg({buf}, spec);
    CHECK(img.width() == spec.ref_width);
    CHECK(img.height() == spec.ref_height);
    for (double v : img.data()) REQUIRE((v >= 0.0 && v <= 1.0));
  }
  auto degenerate = render_svg({"<svg viewBox=\"0 0 1 1\"><rect width=\"1\" height=\"1\"/></svg>"}, {33, 21});
  CHECK(degenerate.width() == 33);
  CHECK(degenerate.height() == 21);
}

TEST_CASE("grayscale uses the luma weights") {
  auto white = to_grayscale(RasterImage::filled(4, 3, {1, 1, 1}));
  CHECK(white.channels() == 1);
  for (double v : white.data()) CHECK(v == doctest::Approx(1.0));
  auto black = to_grayscale(RasterImage::filled(4, 3, {0, 0, 0}));
  for (double v : black.data()) CHECK(v == 0.0);
  auto red = to_grayscale(RasterImage::filled(4, 3, {1, 0, 0}));
  for (double v : red.data()) CHECK(v == doctest::Approx(0.299));

  double prev = -1;
  for (double level = 0.0; level <= 1.0; level += 0.05) {
    double g = to_grayscale(RasterImage::filled(2, 2, {level, level, level})).at(0, 0);
    CHECK(g > prev);
    prev = g;
  }
}

TEST_CASE("edge pipeline on constant images is zero") {
  for (double level : {0.0, 0.3, 1.0}) {
    auto out = canny_pipeline(RasterImage::filled(40, 30, {level, level, level}));
    CHECK(out.channels() == 1);
    for (double v : out.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("edge pipeline on a square is a band around its boundary") {
  auto img = white_square(64, 20, 44);
  auto out = canny_pipeline(img);
  CHECK(out.at(20, 32) > 0.1);
  CHECK(out.at(43, 32) > 0.1);
  CHECK(out.at(32, 32) == 0.0);
  CHECK(out.at(2, 2) == 0.0);
  for (double v : out.data()) CHECK((v >= 0.0 && v <= 1.0));
  auto again = canny_pipeline(img);
  CHECK(again == out);
}

TEST_CASE("canny matches an independent implementation") {
  // A unit step has Sobel magnitude 4 * 255 on 8-bit input.
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pos(4, 40);
  std::size_t total_differ = 0, total_edge = 0;
  for (int trial = 0; trial < 20; ++trial) {
    RasterImage img(64, 64, 1, 0.0);
    for (int k = 0; k < 3; ++k) {
      int x0 = pos(rng), y0 = pos(rng), side = pos(rng) / 2;
      double level = (k + 1) / 3.0;
      for (int y = y0; y < std::min(64, y0 + side); ++y)
        for (int x = x0; x < std::min(64, x0 + side); ++x) img.at(x, y) = level;
    }
    cv::Mat u8;
    to_mat(img).convertTo(u8, CV_8U, 255.0);
    // Quantize our input the same way so both see identical pixels.
    RasterImage quant = from_mat(u8);
    for (auto& v : quant.data()) v /= 255.0;

    cv::Mat ref;
    cv::Canny(u8, ref, 0.1 * 1020, 0.3 * 1020, 3, true);
    auto ours = canny_edges(quant, 0.1, 0.3);
    std::size_t differ = 0, edge = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        bool a = ours.at(x, y) > 0.5, b = ref.at<unsigned char>(y, x) > 0;
        differ += a != b;
        edge += b;
      }
    INFO("trial ", trial, " edge ", edge, " differ ", differ);
    CHECK(edge > 0);
    CHECK(differ * 10 <= edge);
    total_differ += differ;
    total_edge += edge;
  }
  MESSAGE("canny disagreement ", total_differ, " of ", total_edge, " edge pixels");
  CHECK(total_differ * 50 <= total_edge);
}

TEST_CASE("dilation and blur match an independent implementation") {
  std::mt19937_64 rng(8);
  auto img = random_image(rng, 37, 29, 1);
  cv::Mat dil;
  cv::dilate(to_mat(img), dil, cv::getStructuringElement(cv::MORPH_RECT, {3, 3}), {-1, -1}, 2);
  auto ours_dil = dilate(img, 3, 2);
  auto ref_dil = from_mat(dil);
  for (std::size_t i = 0; i < ours_dil.size(); ++i) CHECK(ours_dil.data()[i] == ref_dil.data()[i]);

  cv::Mat blur;
  cv::GaussianBlur(to_mat(img), blur, {13, 13}, 13 / 6.0, 13 / 6.0, cv::BORDER_REFLECT_101);
  auto ours_blur = gaussian_blur(img, 13, 0.0);
  auto ref_blur = from_mat(blur);
  for (std::size_t i = 0; i < ours_blur.size(); ++i) CHECK(ours_blur.data()[i] == doctest::Approx(ref_blur.data()[i]).epsilon(1e-9));
}

TEST_CASE("edge parameters are validated") {
  EdgeParams p;
  p.canny_low = 0.5;
  p.canny_high = 0.2;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.blur_size = 12;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.dilate_kernel = 2;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("shortest-side resize") {
  auto square = resize_shortest_side(RasterImage(512, 512, 3), 512);
  CHECK((square.width() == 512 && square.height() == 512));
  auto wide = resize_shortest_side(RasterImage(1024, 512, 3), 512);
  CHECK((wide.width() == 1024 && wide.height() == 512));
  auto up = resize_shortest_side(RasterImage(400, 200, 1), 512);
  CHECK((up.width() == 1024 && up.height() == 512));
  auto odd = resize_shortest_side(RasterImage(333, 500, 1), 100);
  CHECK(odd.width() == 100);
  CHECK(std::abs(odd.height() - 500.0 * 100 / 333) <= 1.0);
}

TEST_CASE("bilinear resize matches an independent implementation") {
  std::mt19937_64 rng(9);
  auto img = random_image(rng, 20, 13, 3);
  for (auto [w, h] : {std::pair{40, 26}, std::pair{31, 17}, std::pair{7, 5}}) {
    cv::Mat ref;
    cv::resize(to_mat(img), ref, {w, h}, 0, 0, cv::INTER_LINEAR);
    auto ours = resize_bilinear(img, w, h);
    auto theirs = from_mat(ref);
    for (std::size_t i = 0; i < ours.size(); ++i) CHECK(ours.data()[i] == doctest::Approx(theirs.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("area resize matches an independent implementation") {
  std::mt19937_64 rng(10);
  auto img = random_image(rng, 64, 48, 3);
  cv::Mat ref;
  cv::resize(to_mat(img), ref, {8, 8}, 0, 0, cv::INTER_AREA);
  auto ours = resize_area(img, 8, 8);
  auto theirs = from_mat(ref);
  for (std::size_t i = 0; i < ours.size(); ++i) CHECK(ours.data()[i] == doctest::Approx(theirs.data()[i]).epsilon(1e-6));
}

TEST_CASE("png and base64 round trips") {
  std::mt19937_64 rng(12);
  for (int c : {1, 3}) {
    auto img = random_image(rng, 9, 7, c);
    for (auto& v : img.data()) v = std::round(v * 255) / 255;
    auto back = decode_png(encode_png(img));
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.data()[i] == doctest::Approx(img.data()[i]));
  }
  std::vector<std::uint8_t> bytes{0, 1, 2, 250, 255, 7, 8};
  for (std::size_t n = 0; n <= bytes.size(); ++n) {
    std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + n);
    CHECK(base64_decode(base64_encode(prefix)) == prefix);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK_THROWS(decode_png(std::vector<std::uint8_t>{1, 2, 3}));
}
