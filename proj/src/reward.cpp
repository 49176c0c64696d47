#include "rlrf/reward.hpp"

#include <algorithm>
#include <cmath>

#include "rlrf/error.hpp"

namespace rlrf {

namespace {

constexpr RewardKind kAllKinds[] = {RewardKind::l2,        RewardKind::l2_canny, RewardKind::dreamsim,
                                    RewardKind::dreamsim_canny, RewardKind::clip_text, RewardKind::judge,
                                    RewardKind::length};

}  // namespace

std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::l2: return "l2";
    case RewardKind::l2_canny: return "l2_canny";
    case RewardKind::dreamsim: return "dreamsim";
    case RewardKind::dreamsim_canny: return "dreamsim_canny";
    case RewardKind::clip_text: return "clip_text";
    case RewardKind::judge: return "judge";
    case RewardKind::length: return "length";
  }
  return "unknown";
}

RewardKind parse_reward_kind(const std::string& name) {
  for (auto k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown reward component '" + name + "'");
}

bool is_image_reward(RewardKind k) { return k != RewardKind::length; }

void RewardSpec::validate() const {
  if (components.empty()) throw ConfigError("RewardSpec: at least one component is required");
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (!std::isfinite(components[i].weight)) throw ConfigError("RewardSpec: weights must be finite");
    for (std::size_t j = 0; j < i; ++j) {
      if (components[j].kind == components[i].kind) {
        throw ConfigError("RewardSpec: duplicate component " + to_string(components[i].kind));
      }
    }
  }
}

bool RewardSpec::contains(RewardKind k) const {
  return std::any_of(components.begin(), components.end(), [k](const auto& c) { return c.kind == k; });
}

RewardSpec RewardSpec::with_weight(RewardKind k, double weight) const {
  RewardSpec out = *this;
  for (auto& c : out.components) {
    if (c.kind == k) c.weight = weight;
  }
  return out;
}

RewardSpec RewardSpec::defaults() {
  return {{{RewardKind::l2, 1.0}, {RewardKind::l2_canny, 1.0}, {RewardKind::dreamsim, 1.0}, {RewardKind::length, 0.1}}};
}

RewardSpec RewardSpec::l2_only() { return {{{RewardKind::l2, 1.0}}}; }

RewardSpec RewardSpec::from_json(const nlohmann::ordered_json& j) {
  RewardSpec spec;
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      if (key == "length_floor") {
        if (!value.is_boolean()) throw ConfigError("length_floor must be a boolean");
        spec.length_floor = value.get<bool>();
        continue;
      }
      if (!value.is_number()) throw ConfigError("reward weight for '" + key + "' must be a number");
      spec.components.push_back({parse_reward_kind(key), value.get<double>()});
    }
  } else if (j.is_array()) {
    for (const auto& item : j) {
      if (!item.is_object() || !item.contains("kind") || !item.contains("weight") || !item["weight"].is_number()) {
        throw ConfigError("reward component entries need 'kind' and numeric 'weight'");
      }
      spec.components.push_back({parse_reward_kind(item["kind"].get<std::string>()), item["weight"].get<double>()});
      if (item.contains("floor")) {
        if (!item["floor"].is_boolean()) throw ConfigError("floor must be a boolean");
        if (spec.components.back().kind != RewardKind::length) throw ConfigError("floor only applies to length");
        spec.length_floor = item["floor"].get<bool>();
      }
    }
  } else {
    throw ConfigError("rewards must be an object or an array");
  }
  spec.validate();
  return spec;
}

nlohmann::ordered_json RewardSpec::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& c : components) j[to_string(c.kind)] = c.weight;
  if (length_floor) j["length_floor"] = true;
  return j;
}

std::optional<double> RewardBreakdown::value(RewardKind k) const {
  for (const auto& c : per_component) {
    if (c.kind == k) return c.value;
  }
  return std::nullopt;
}

nlohmann::ordered_json RewardBreakdown::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json parts = nlohmann::ordered_json::object();
  for (const auto& c : per_component) parts[to_string(c.kind)] = c.value;
  j["components"] = parts;
  nlohmann::ordered_json dropped_j = nlohmann::ordered_json::array();
  for (auto k : dropped) dropped_j.push_back(to_string(k));
  j["dropped"] = dropped_j;
  j["total"] = total;
  j["render_failed"] = render_failed;
  if (render_failed) j["render_error"] = render_error;
  return j;
}

NormalizedImage normalize_image(const RasterImage& img, double eps) {
  if (!(eps > 0)) throw ConfigError("normalize_image: eps must be > 0");
  NormalizedImage out{img.width(), img.height(), img.channels(), {}, 0.0, 0.0};
  auto data = img.data();
  const double n = static_cast<double>(data.size());
  if (data.empty()) return out;
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  double mean = 0;
  for (double v : data) mean += v;
  // A constant image is exactly its own mean; summation error would otherwise
  // be amplified by the eps floor.
  mean = *lo == *hi ? *lo : mean / n;
  double var = 0;
  for (double v : data) var += (v - mean) * (v - mean);
  var /= n;
  out.mean = mean;
  out.stddev = std::sqrt(var);
  const double denom = std::max(out.stddev, eps);
  out.values.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.values[i] = (data[i] - mean) / denom;
  return out;
}

double reward_l2(const RasterImage& input, const RasterImage& pred) {
  if (!input.same_shape(pred)) throw DimensionMismatch("reward_l2: images differ in shape");
  if (input.empty()) throw DimensionMismatch("reward_l2: empty images");
  auto a = normalize_image(input);
  auto b = normalize_image(pred);
  double sq = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    sq += d * d;
  }
  return std::clamp(1.0 - sq / static_cast<double>(a.values.size()), -1.0, 1.0);
}

double reward_l2_canny(const RasterImage& input, const RasterImage& pred, const EdgeParams& p) {
  if (input.width() != pred.width() || input.height() != pred.height()) {
    throw DimensionMismatch("reward_l2_canny: images differ in size");
  }
  return reward_l2(canny_pipeline(input, p), canny_pipeline(pred, p));
}

double reward_length(std::size_t pred_length, std::optional<std::size_t> gt_length, bool floor) {
  if (!gt_length || *gt_length == 0) throw MissingGroundTruth();
  const double gt = static_cast<double>(*gt_length);
  if (floor && 2.0 * static_cast<double>(pred_length) < gt) return -1.0;
  const double excess = std::max(0.0, static_cast<double>(pred_length) - gt / 2.0) / gt;
  return std::clamp(1.0 - excess * excess, -1.0, 1.0);
}

double reward_semantic(const RasterImage& input, const RasterImage& pred, const SemanticClient& client,
                       SemanticMetric metric, const EdgeParams& edges) {
  if (input.width() != pred.width() || input.height() != pred.height()) {
    throw DimensionMismatch("reward_semantic: images differ in size");
  }
  double sim;
  if (metric == SemanticMetric::dreamsim_canny) {
    sim = client.score_pair(replicate_channels(canny_pipeline(input, edges)),
                            replicate_channels(canny_pipeline(pred, edges)), metric);
  } else {
    sim = client.score_pair(input, pred, metric);
  }
  return std::clamp(1.0 - sim, -1.0, 1.0);
}

double aggregate(const RewardSpec& spec, const RewardBreakdown& parts) {
  if (parts.per_component.size() != spec.components.size()) {
    throw ComponentMismatch("aggregate: breakdown has " + std::to_string(parts.per_component.size()) +
                            " components, spec has " + std::to_string(spec.components.size()));
  }
  double total = 0;
  for (const auto& c : spec.components) {
    auto v = parts.value(c.kind);
    if (!v) throw ComponentMismatch("aggregate: missing component " + to_string(c.kind));
    total += c.weight * *v;
  }
  return total;
}

namespace {

// Minimum of each component's range; what a broken render earns.
double worst_value(RewardKind k) { return k == RewardKind::judge ? 0.0 : -1.0; }

SemanticMetric semantic_metric_for(RewardKind k) {
  switch (k) {
    case RewardKind::dreamsim: return SemanticMetric::dreamsim;
    case RewardKind::dreamsim_canny: return SemanticMetric::dreamsim_canny;
    case RewardKind::clip_text: return SemanticMetric::clip_text;
    default: return SemanticMetric::judge_hard;
  }
}

RasterImage match_reference(const RasterImage& input, const RenderSpec& render) {
  RasterImage ref = input.channels() == 3 ? input : replicate_channels(input);
  if (ref.width() != render.ref_width || ref.height() != render.ref_height) {
    ref = resize_bilinear(ref, render.ref_width, render.ref_height);
  }
  return ref;
}

}  // namespace

RewardBreakdown reward_rollout(const RasterImage& input, const SvgSource& svg, std::optional<std::size_t> gt_length,
                               const RewardSpec& spec, const RenderSpec& render, const RewardContext& ctx) {
  spec.validate();
  const Renderer& renderer = ctx.renderer ? *ctx.renderer : default_renderer();
  RewardBreakdown out;

  SanitizeOptions options;
  options.strip_text = ctx.prompt.has_value();
  auto [clean, report] = sanitize_svg(svg, options);

  std::optional<RasterImage> pred;
  try {
    pred = renderer.render(clean, render);
  } catch (const RenderError& e) {
    out.render_failed = true;
    out.render_error = e.what();
  }
  const RasterImage reference = match_reference(input, render);

  for (const auto& c : spec.components) {
    double value = 0;
    if (c.kind == RewardKind::length) {
      if (!gt_length || *gt_length == 0) {
        out.dropped.push_back(c.kind);
        continue;
      }
      value = reward_length(ctx.pred_length ? *ctx.pred_length : token_length(lex_svg(svg)), gt_length,
                              spec.length_floor);
    } else if (!pred) {
      value = worst_value(c.kind);
    } else {
      try {
        switch (c.kind) {
          case RewardKind::l2:
            value = reward_l2(reference, *pred);
            break;
          case RewardKind::l2_canny:
            value = reward_l2_canny(reference, *pred, ctx.edges);
            break;
          case RewardKind::dreamsim:
          case RewardKind::dreamsim_canny:
            if (!ctx.semantic) throw BackendUnavailable("no semantic backend configured");
            value = reward_semantic(reference, *pred, *ctx.semantic, semantic_metric_for(c.kind), ctx.edges);
            break;
          case RewardKind::clip_text:
          case RewardKind::judge:
            if (!ctx.prompt) throw ConfigError(to_string(c.kind) + " reward needs a text prompt");
            if (!ctx.semantic) throw BackendUnavailable("no semantic backend configured");
            value = ctx.semantic->score_text_image(*ctx.prompt, *pred, semantic_metric_for(c.kind));
            break;
          case RewardKind::length:
            break;
        }
      } catch (const BackendUnavailable&) {
        if (!ctx.drop_unavailable) throw;
        out.dropped.push_back(c.kind);
        continue;
      }
    }
    out.per_component.push_back({c.kind, value});
    out.total += c.weight * value;
  }
  return out;
}

}  // namespace rlrf
