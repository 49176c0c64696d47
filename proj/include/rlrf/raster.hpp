#pragma once

#include "rlrf/image.hpp"
#include "rlrf/svg.hpp"

namespace rlrf {

// Output canvas for rendering. The size always comes from the reference
// image, never from the SVG's own viewBox or width/height.
struct RenderSpec {
  int ref_width = 512;
  int ref_height = 512;
  Rgb background{1.0, 1.0, 1.0};

  void validate() const;
};

// Static-SVG rasterizer contract. Implementations must be safe to call
// concurrently on the same instance.
class Renderer {
 public:
  virtual ~Renderer() = default;
  // Returns a ref_width x ref_height RGB image. Throws RenderError.
  virtual RasterImage render(const SvgSource& src, const RenderSpec& spec) const = 0;
};

// Scanline rasterizer for the static SVG subset: svg/g/use, rect, circle,
// ellipse, line, polyline, polygon and path with solid paints. Gradient
// paints are flattened to the mean stop color. Strokes use round joins.
// Text, raster images, scripting, animation and external references raise
// RenderError(unsupported).
class SoftwareRenderer final : public Renderer {
 public:
  explicit SoftwareRenderer(int samples_per_pixel_row = 4) : subsamples_(samples_per_pixel_row) {}
  RasterImage render(const SvgSource& src, const RenderSpec& spec) const override;

 private:
  int subsamples_;
};

const Renderer& default_renderer();

// Renders with default_renderer(). The viewBox is fit into the reference
// canvas preserving its aspect ratio; leftover area shows the background.
RasterImage render_svg(const SvgSource& src, const RenderSpec& spec);

struct EdgeParams {
  double canny_low = 0.1;   // on unit-scale gradient magnitude
  double canny_high = 0.3;
  int dilate_kernel = 3;
  int dilate_iterations = 1;
  int blur_size = 13;
  double blur_sigma = 0.0;  // <= 0 means blur_size / 6

  void validate() const;
};

// Binary Canny edge map (values 0 or 1) of a single-channel image in [0, 1].
// Gradients are 3x3 Sobel divided by 4 so a unit step has magnitude 1.
RasterImage canny_edges(const RasterImage& gray, double low, double high);

// Square max filter with side `kernel`, repeated `iterations` times.
RasterImage dilate(const RasterImage& img, int kernel, int iterations);

// Separable Gaussian blur with reflect-101 borders.
RasterImage gaussian_blur(const RasterImage& img, int size, double sigma);

// Canny -> dilation -> Gaussian blur. RGB input is converted to luma first.
RasterImage canny_pipeline(const RasterImage& img, const EdgeParams& p = {});

}  // namespace rlrf
