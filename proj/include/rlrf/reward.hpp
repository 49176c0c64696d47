#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlrf/raster.hpp"
#include "rlrf/semantic.hpp"
#include "rlrf/svg.hpp"

namespace rlrf {

enum class RewardKind { l2, l2_canny, dreamsim, dreamsim_canny, clip_text, judge, length };

std::string to_string(RewardKind k);
RewardKind parse_reward_kind(const std::string& name);

// Components computed by comparing the rendered prediction with the input image.
bool is_image_reward(RewardKind k);

struct RewardComponent {
  RewardKind kind;
  double weight;
};

struct RewardSpec {
  std::vector<RewardComponent> components;
  // Length term scores -1 when the prediction is shorter than half the
  // ground truth instead of saturating at 1 (anti-collapse option, off by default).
  bool length_floor = false;

  void validate() const;
  bool contains(RewardKind k) const;
  // Returns a copy with the weight of `k` replaced (no-op when absent).
  RewardSpec with_weight(RewardKind k, double weight) const;

  // l2, l2_canny, dreamsim at 1.0 and length at 0.1.
  static RewardSpec defaults();
  static RewardSpec l2_only();

  // Accepts {"l2": 1.0, ..., "length_floor": true} (document order kept) or
  // [{"kind": "l2", "weight": 1.0}, {"kind": "length", "weight": 0.1, "floor": true}, ...].
  static RewardSpec from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
};

struct ComponentValue {
  RewardKind kind;
  double value;
};

struct RewardBreakdown {
  std::vector<ComponentValue> per_component;
  std::vector<RewardKind> dropped;  // skipped components (no ground truth, backend down)
  double total = 0.0;
  bool render_failed = false;
  std::string render_error;

  std::optional<double> value(RewardKind k) const;
  nlohmann::ordered_json to_json() const;
};

// (I - mean) / max(std, eps) with population statistics over all elements.
struct NormalizedImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
};

inline constexpr double kNormalizeEps = 1e-6;

NormalizedImage normalize_image(const RasterImage& img, double eps = kNormalizeEps);

// clip(1 - ||norm(input) - norm(pred)||^2 / N, -1, 1), N = W * H * C.
double reward_l2(const RasterImage& input, const RasterImage& pred);

// reward_l2 on the canny_pipeline edge maps of both images.
double reward_l2_canny(const RasterImage& input, const RasterImage& pred, const EdgeParams& p = {});

// clip(1 - (max(0, L_pred - L_gt / 2) / L_gt)^2, -1, 1). With `floor`, any
// L_pred < L_gt / 2 scores -1. Throws MissingGroundTruth.
double reward_length(std::size_t pred_length, std::optional<std::size_t> gt_length, bool floor = false);

// 1 - sim for dreamsim / dreamsim_canny. Edge maps are replicated to three
// channels before scoring dreamsim_canny.
double reward_semantic(const RasterImage& input, const RasterImage& pred, const SemanticClient& client,
                       SemanticMetric metric = SemanticMetric::dreamsim, const EdgeParams& edges = {});

// Exact weighted sum over the spec's components. Throws ComponentMismatch.
double aggregate(const RewardSpec& spec, const RewardBreakdown& parts);

struct RewardContext {
  const Renderer* renderer = nullptr;  // default_renderer() when null
  EdgeParams edges;
  const SemanticClient* semantic = nullptr;
  // Text-conditioned rollouts: enables <text> stripping and text rewards.
  std::optional<std::string> prompt;
  // When the semantic backend is down: drop the component (true) or rethrow.
  bool drop_unavailable = false;
  // Token count of the prediction under the generating model's tokenizer.
  // When unset the length term counts lex_svg tokens of the raw text, and
  // gt_length must use the same unit.
  std::optional<std::size_t> pred_length;
};

// Full scoring pipeline for one rollout: sanitize, render at the reference
// size, score every component, aggregate. A render failure scores every
// image-based component at its minimum; the length term uses the raw text.
RewardBreakdown reward_rollout(const RasterImage& input, const SvgSource& svg, std::optional<std::size_t> gt_length,
                               const RewardSpec& spec, const RenderSpec& render, const RewardContext& ctx = {});

}  // namespace rlrf
