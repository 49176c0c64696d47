#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "rlrf/curation.hpp"
#include "rlrf/error.hpp"
#include "rlrf/grpo.hpp"
#include "rlrf/metrics.hpp"
#include "rlrf/raster.hpp"
#include "rlrf/reward.hpp"
#include "rlrf/svg.hpp"

namespace py = pybind11;
using namespace rlrf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// H x W or H x W x C float array in [0, 1].
RasterImage to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must be HxW or HxWxC");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return RasterImage(w, h, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const RasterImage& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() > 1) shape.push_back(img.channels());
  Array out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

RenderSpec render_spec(int width, int height) {
  RenderSpec rs;
  rs.ref_width = width;
  rs.ref_height = height;
  return rs;
}

}  // namespace

PYBIND11_MODULE(_rlrf, m) {
  m.doc() = "Rendering-feedback rewards, GRPO algebra and image metrics";

  auto base = py::register_exception<Error>(m, "RlrfError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<RenderError>(m, "RenderError", base.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<LengthMismatch>(m, "LengthMismatch", base.ptr());
  py::register_exception<MissingGroundTruth>(m, "MissingGroundTruth", base.ptr());

  m.def(
      "sanitize_svg",
      [](const std::string& text, bool strip_text) {
        SanitizeOptions o;
        o.strip_text = strip_text;
        auto [clean, r] = sanitize_svg({text}, o);
        py::dict report;
        report["removed_headers"] = r.removed_headers;
        report["removed_text_elements"] = r.removed_text_elements;
        report["removed_base64_payloads"] = r.removed_base64_payloads;
        report["decimals_rounded"] = r.decimals_rounded;
        return py::make_tuple(clean.text, report);
      },
      py::arg("svg"), py::arg("strip_text") = false);
  m.def("token_count", [](const std::string& text) { return token_length(lex_svg({text})); }, py::arg("svg"));

  m.def(
      "render",
      [](const std::string& svg, int width, int height) {
        RasterImage img;
        {
          py::gil_scoped_release unlocked;
          img = render_svg({svg}, render_spec(width, height));
        }
        return to_array(img);
      },
      py::arg("svg"), py::arg("width") = 512, py::arg("height") = 512, "Rasterize to an HxWx3 array in [0, 1].");

  m.def("reward_l2", [](const Array& a, const Array& b) { return reward_l2(to_image(a), to_image(b)); });
  m.def("reward_l2_canny", [](const Array& a, const Array& b) { return reward_l2_canny(to_image(a), to_image(b)); });
  m.def(
      "reward_length",
      [](std::size_t pred, std::optional<std::size_t> gt, bool floor) { return reward_length(pred, gt, floor); },
      py::arg("pred_length"), py::arg("gt_length"), py::arg("floor") = false);
  m.def(
      "reward_rollout",
      [](const Array& image, const std::string& svg, std::optional<std::size_t> gt_length, const std::string& spec,
         int width, int height) {
        const auto rs = RewardSpec::from_json(nlohmann::ordered_json::parse(spec));
        const auto input = to_image(image);
        RewardBreakdown br;
        {
          py::gil_scoped_release unlocked;
          br = reward_rollout(input, {svg}, gt_length, rs, render_spec(width, height));
        }
        return br.to_json().dump();
      },
      py::arg("image"), py::arg("svg"), py::arg("gt_length"), py::arg("spec_json"), py::arg("width"),
      py::arg("height"));

  m.def(
      "compute_advantages",
      [](const std::vector<double>& rewards, bool std_normalize) {
        return grpo::compute_advantages(rewards, std_normalize);
      },
      py::arg("rewards"), py::arg("std_normalize") = false);
  m.def("clipped_term", &grpo::clipped_term, py::arg("ratio"), py::arg("advantage"), py::arg("eps"));
  m.def(
      "grpo_surrogate",
      [](const std::vector<double>& r, const std::vector<double>& a, double eps) {
        return grpo::grpo_surrogate(r, a, eps);
      },
      py::arg("ratios"), py::arg("advantages"), py::arg("eps"));

  m.def("mse", [](const Array& a, const Array& b) { return mse(to_image(a), to_image(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); });
  m.def("code_efficiency", [](const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred) {
    return code_efficiency(gt, pred);
  });
  m.def("best_of_n", [](const std::vector<Array>& candidates, const Array& target) {
    std::vector<RasterImage> imgs;
    for (const auto& c : candidates) imgs.push_back(to_image(c));
    return best_of_n(imgs, to_image(target));
  });

  m.def("color_entropy", [](const Array& a, int bins) { return curation::color_entropy(to_image(a), bins); },
        py::arg("image"), py::arg("bins") = 8);
  m.def("is_blank", [](const Array& a, double t) { return curation::is_blank(to_image(a), t); }, py::arg("image"),
        py::arg("threshold") = 0.98);
}
