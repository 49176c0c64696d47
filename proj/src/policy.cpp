#include "rlrf/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "rlrf/error.hpp"
#include "rlrf/raster.hpp"
#include "rlrf/xml.hpp"

namespace rlrf::policy {

using V = MiniVocab;

const std::array<Rgb, V::color_count>& MiniVocab::palette() {
  static const std::array<Rgb, V::color_count> colors = [] {
    const std::uint32_t hex[V::color_count] = {0x000000, 0xff0000, 0x008000, 0x0000ff, 0xffff00, 0x00ffff,
                                               0xff00ff, 0xffa500, 0x800080, 0xa52a2a, 0x808080, 0xffc0cb,
                                               0x000080, 0x008080, 0x808000, 0x800000};
    std::array<Rgb, V::color_count> out{};
    for (int i = 0; i < V::color_count; ++i) {
      out[i] = {((hex[i] >> 16) & 0xff) / 255.0, ((hex[i] >> 8) & 0xff) / 255.0, (hex[i] & 0xff) / 255.0};
    }
    return out;
  }();
  return colors;
}

namespace {

std::string color_hex(int index) {
  const auto& c = V::palette()[index];
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(c[0] * 255)),
                static_cast<int>(std::lround(c[1] * 255)), static_cast<int>(std::lround(c[2] * 255)));
  return buf;
}

Slot first_arg_slot(std::int32_t opcode) {
  switch (opcode) {
    case V::rect: return Slot::rect_x;
    case V::circle: return Slot::circle_cx;
    default: return Slot::line_x1;
  }
}

Slot next_arg_slot(Slot s) {
  switch (s) {
    case Slot::rect_h:
    case Slot::circle_r:
    case Slot::line_y2: return Slot::color;
    default: return static_cast<Slot>(static_cast<int>(s) + 1);
  }
}

// Consumes one token; throws InvalidPrefix when the grammar forbids it.
void advance(GrammarState& st, std::int32_t tok) {
  switch (st.slot) {
    case Slot::op:
      if (tok == V::eos && st.primitives > 0) {
        st.slot = Slot::done;
      } else if (V::is_opcode(tok)) {
        st.slot = first_arg_slot(tok);
      } else {
        throw InvalidPrefix("token " + std::to_string(tok) + " where an opcode was expected");
      }
      break;
    case Slot::color:
      if (!V::is_color(tok)) throw InvalidPrefix("token " + std::to_string(tok) + " where a color was expected");
      ++st.primitives;
      st.slot = Slot::op;
      break;
    case Slot::done:
      throw InvalidPrefix("tokens after EOS");
    default:
      if (!V::is_coord(tok)) throw InvalidPrefix("token " + std::to_string(tok) + " where a coordinate was expected");
      st.slot = next_arg_slot(st.slot);
      break;
  }
  ++st.length;
}

GrammarState start_state(std::span<const std::int32_t> tokens) {
  if (tokens.empty() || tokens[0] != V::bos) throw InvalidPrefix("sequence must start with BOS");
  GrammarState st;
  st.length = 1;
  return st;
}

std::size_t effective_cap(std::size_t max_len) {
  if (max_len == 0) return kUnlimited;
  return std::max(max_len, kMinSequenceLength);
}

std::size_t input_index(const GrammarState& st, std::size_t i) {
  const auto route = static_cast<std::size_t>(std::min(st.primitives, PolicyParams::route_primitives - 1));
  const auto block = static_cast<std::size_t>(st.slot) * PolicyParams::route_primitives + route;
  return block * PolicyParams::condition_block + i;
}

// One teacher-forced step: the input, the tempered distribution and the token taken.
struct Step {
  SparseInput x;
  std::array<double, V::size> p{};
  std::int32_t token = 0;
  double logprob = 0.0;
};

Logits raw_logits(const PolicyParams& params, const SparseInput& x, const std::array<bool, V::size>& allowed) {
  Logits z;
  const auto w = params.values();
  for (std::size_t v = 0; v < V::size; ++v) {
    if (!allowed[v]) {
      z[v] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double s = params.bias(v);
    const double* row = w.data() + v * PolicyParams::input_dim;
    for (const auto& [idx, val] : x.entries) s += row[idx] * val;
    z[v] = s;
  }
  return z;
}

// Forward pass along a complete or partial sequence.
std::vector<Step> forward(const PolicyParams& params, const ConditionFeatures& features,
                          std::span<const std::int32_t> tokens, double temperature, std::size_t max_len) {
  GrammarState st = start_state(tokens);
  const std::size_t cap = effective_cap(max_len);
  std::vector<Step> steps;
  steps.reserve(tokens.size());
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const auto allowed = allowed_tokens(st, cap);
    const std::int32_t tok = tokens[t];
    if (tok < 0 || tok >= V::size || !allowed[tok]) {
      throw InvalidPrefix("token " + std::to_string(tok) + " not allowed at position " + std::to_string(t));
    }
    Step s;
    s.x = policy_input(features, tokens.first(t), st);
    s.p = softmax(raw_logits(params, s.x, allowed), temperature);
    s.token = tok;
    s.logprob = std::log(s.p[tok]);
    steps.push_back(std::move(s));
    advance(st, tok);
  }
  return steps;
}

// grad += coef * d log p_T(token) / d params for one step.
void accumulate(std::vector<double>& grad, const Step& s, double coef, double temperature) {
  const double c = coef / temperature;
  for (std::size_t v = 0; v < V::size; ++v) {
    const double d = ((static_cast<std::int32_t>(v) == s.token) ? 1.0 : 0.0) - s.p[v];
    if (d == 0.0) continue;
    const double k = c * d;
    double* row = grad.data() + v * PolicyParams::input_dim;
    for (const auto& [idx, val] : s.x.entries) row[idx] += k * val;
    grad[V::size * PolicyParams::input_dim + v] += k;
  }
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string fmt_num(double v) {
  char buf[32];
  if (v == std::floor(v)) {
    std::snprintf(buf, sizeof buf, "%d", static_cast<int>(v));
  } else {
    std::snprintf(buf, sizeof buf, "%.1f", v);
  }
  return buf;
}

}  // namespace

GrammarState grammar_state(std::span<const std::int32_t> prefix) {
  GrammarState st = start_state(prefix);
  for (std::size_t i = 1; i < prefix.size(); ++i) advance(st, prefix[i]);
  return st;
}

std::array<bool, V::size> allowed_tokens(const GrammarState& st, std::size_t max_len) {
  std::array<bool, V::size> ok{};
  const std::size_t cap = effective_cap(max_len);
  switch (st.slot) {
    case Slot::op:
      if (st.primitives > 0) ok[V::eos] = true;
      for (std::int32_t op = V::rect; op <= V::line; ++op) {
        // opcode, arguments, color and the closing EOS must all fit.
        if (st.length + 1 + V::arity(op) + 1 + 1 <= cap) ok[op] = true;
      }
      break;
    case Slot::color:
      for (int i = 0; i < V::color_count; ++i) ok[V::color(i)] = true;
      break;
    case Slot::done:
      break;
    default:
      for (int b = 0; b < V::coord_bins; ++b) ok[V::coord(b)] = true;
      break;
  }
  return ok;
}

ConditionFeatures featurize(const RasterImage& img) {
  ConditionFeatures f;
  f.values.assign(ConditionFeatures::size, 0.0);
  if (img.empty()) return f;
  const RasterImage rgb = img.channels() == 3 ? img : replicate_channels(to_grayscale(img));
  const RasterImage small = resize_area(rgb, ConditionFeatures::side, ConditionFeatures::side);
  auto d = small.data();
  std::copy(d.begin(), d.end(), f.values.begin());
  const double mean = std::accumulate(f.values.begin(), f.values.end(), 0.0) / ConditionFeatures::size;
  for (double& v : f.values) v -= mean;
  return f;
}

PolicyParams PolicyParams::random(std::uint64_t seed, double scale) {
  PolicyParams p;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : p.values_) v = n(rng);
  return p;
}

SparseInput policy_input(const ConditionFeatures& features, std::span<const std::int32_t> prefix,
                         const GrammarState& state) {
  if (features.values.size() != ConditionFeatures::size) throw DimensionMismatch("condition features must have 192 entries");
  if (state.slot == Slot::done) throw InvalidPrefix("no next token after EOS");
  SparseInput x;
  x.entries.reserve(ConditionFeatures::size + PolicyParams::history + 2);
  for (std::size_t i = 0; i < ConditionFeatures::size; ++i) {
    x.entries.emplace_back(input_index(state, i), features.values[i]);
  }
  for (int k = 0; k < PolicyParams::history; ++k) {
    const std::size_t pos = prefix.size();
    const std::size_t tok = static_cast<std::size_t>(k) < pos ? static_cast<std::size_t>(prefix[pos - 1 - k]) : V::size;
    x.entries.emplace_back(PolicyParams::history_offset + k * PolicyParams::history_width + tok, 1.0);
  }
  x.entries.emplace_back(PolicyParams::slot_offset + static_cast<std::size_t>(state.slot), 1.0);
  x.entries.emplace_back(PolicyParams::primitive_offset +
                             std::min(state.primitives, PolicyParams::max_primitive_index - 1),
                         1.0);
  return x;
}

Logits logits(const PolicyParams& params, const ConditionFeatures& features, std::span<const std::int32_t> prefix,
              std::size_t max_len) {
  const GrammarState st = grammar_state(prefix);
  if (st.slot == Slot::done) throw InvalidPrefix("no next token after EOS");
  return raw_logits(params, policy_input(features, prefix, st), allowed_tokens(st, max_len));
}

std::array<double, V::size> softmax(const Logits& z, double temperature) {
  if (!(temperature > 0)) throw ConfigError("softmax: temperature must be > 0");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<double, V::size> p{};
  double mx = -inf;
  for (double v : z) {
    // Masked entries are -inf; anything else non-finite poisons the distribution
    // so callers detect it instead of silently dropping the token.
    if (std::isnan(v) || v == inf) {
      p.fill(std::numeric_limits<double>::quiet_NaN());
      return p;
    }
    mx = std::max(mx, v);
  }
  if (mx == -inf) return p;
  double sum = 0;
  for (std::size_t v = 0; v < V::size; ++v) {
    p[v] = std::isfinite(z[v]) ? std::exp((z[v] - mx) / temperature) : 0.0;
    sum += p[v];
  }
  for (double& v : p) v /= sum;
  return p;
}

void SampleConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("sampling: temperature must be > 0");
  if (!(top_p > 0 && top_p <= 1)) throw ConfigError("sampling: top_p must be in (0, 1]");
  if (max_len == 0) throw ConfigError("sampling: max_len must be > 0");
}

grpo::Rollout sample_sequence(const PolicyParams& params, const ConditionFeatures& features, const SampleConfig& cfg) {
  cfg.validate();
  const std::size_t cap = effective_cap(cfg.max_len);
  std::mt19937_64 rng(cfg.seed);
  grpo::Rollout out;
  out.tokens.vocab_id = V::id;
  out.tokens.tokens.push_back(V::bos);
  out.old_logprobs.push_back(0.0);
  out.max_len = cap;
  GrammarState st;
  st.length = 1;
  while (st.slot != Slot::done) {
    const auto allowed = allowed_tokens(st, cap);
    auto p = softmax(raw_logits(params, policy_input(features, out.tokens.tokens, st), allowed), cfg.temperature);
    if (std::isnan(p[0])) throw NonFiniteGradient("policy produced non-finite logits");
    if (cfg.top_p < 1.0) {
      std::array<int, V::size> order;
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
      double cum = 0;
      std::size_t keep = 0;
      while (keep < order.size() && p[order[keep]] > 0) {
        cum += p[order[keep++]];
        if (cum >= cfg.top_p) break;
      }
      for (std::size_t i = keep; i < order.size(); ++i) p[order[i]] = 0.0;
      for (double& v : p) v /= cum;
    }
    const double u = unit_uniform(rng);
    double cum = 0;
    std::int32_t pick = -1;
    for (std::int32_t v = 0; v < V::size; ++v) {
      if (p[v] <= 0) continue;
      pick = v;  // the last positive entry absorbs rounding at u close to 1
      cum += p[v];
      if (u < cum) break;
    }
    out.tokens.tokens.push_back(pick);
    out.old_logprobs.push_back(std::log(p[pick]));
    advance(st, pick);
  }
  return out;
}

std::vector<double> token_logprobs(const PolicyParams& params, const ConditionFeatures& features,
                                   std::span<const std::int32_t> tokens, double temperature, std::size_t max_len) {
  const auto steps = forward(params, features, tokens, temperature, max_len);
  std::vector<double> out(tokens.size(), 0.0);
  for (std::size_t t = 0; t < steps.size(); ++t) out[t + 1] = steps[t].logprob;
  return out;
}

double sequence_logprob(const PolicyParams& params, const ConditionFeatures& features,
                        std::span<const std::int32_t> tokens) {
  const auto lp = token_logprobs(params, features, tokens, 1.0, kUnlimited);
  return std::accumulate(lp.begin(), lp.end(), 0.0);
}

LossAndGrad sft_loss_and_grad(const PolicyParams& params, std::span<const SftExample> batch) {
  if (batch.empty()) throw Error("sft_loss_and_grad: empty batch");
  LossAndGrad out;
  out.grad.assign(PolicyParams::count(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const auto steps = forward(params, ex.features, ex.tokens.tokens, 1.0, kUnlimited);
    for (const auto& s : steps) {
      out.loss -= s.logprob * inv_b;
      accumulate(out.grad, s, -inv_b, 1.0);
    }
  }
  return out;
}

std::vector<double> FrozenPolicy::token_logprobs(const ConditionFeatures& features,
                                                 std::span<const std::int32_t> tokens, double temperature,
                                                 std::size_t max_len) const {
  return policy::token_logprobs(params_, features, tokens, temperature, max_len);
}

GrpoObjective grpo_loss_and_grad(const PolicyParams& params, std::span<const ConditionedGroup> groups,
                                 const grpo::TrainConfig& cfg, const ReferenceModel* reference) {
  if (groups.empty()) throw Error("grpo_loss_and_grad: no groups");
  const bool use_kl = cfg.kl_beta > 0;
  if (use_kl && !reference) throw ConfigError("grpo: kl_beta > 0 requires a reference model");
  GrpoObjective out;
  out.grad.assign(PolicyParams::count(), 0.0);
  const double T = cfg.temperature;
  const double inv_groups = 1.0 / static_cast<double>(groups.size());
  std::size_t total_rollouts = 0;
  for (const auto& g : groups) total_rollouts += g.group.rollouts.size();
  const double inv_rollouts = 1.0 / static_cast<double>(total_rollouts);

  for (const auto& cg : groups) {
    cg.group.validate();
    const auto adv = grpo::compute_advantages(cg.group, cfg.std_normalize);
    const double inv_g = 1.0 / static_cast<double>(cg.group.rollouts.size());
    for (std::size_t i = 0; i < cg.group.rollouts.size(); ++i) {
      const auto& ro = cg.group.rollouts[i];
      const auto steps = forward(params, cg.features, ro.tokens.tokens, T, ro.max_len);
      // Per-token d(beta * KL / N) / d log p; empty when the KL term is off.
      std::vector<double> kl_coef;
      if (use_kl) {
        const auto ref = reference->token_logprobs(cg.features, ro.tokens.tokens, T, ro.max_len);
        double kl = 0;
        kl_coef.resize(steps.size());
        for (std::size_t t = 0; t < steps.size(); ++t) {
          kl += grpo::kl_token(steps[t].logprob, ref[t + 1]);
          kl_coef[t] = cfg.kl_beta * inv_rollouts * grpo::kl_token_slope(steps[t].logprob, ref[t + 1]);
        }
        out.mean_kl += kl * inv_rollouts;
        out.loss += cfg.kl_beta * kl * inv_rollouts;
      }
      auto kl_at = [&](std::size_t t) { return kl_coef.empty() ? 0.0 : kl_coef[t]; };
      const double w = inv_groups * inv_g;
      if (cfg.ratio_mode == grpo::RatioMode::sequence) {
        double log_r = 0;
        for (std::size_t t = 0; t < steps.size(); ++t) log_r += steps[t].logprob - ro.old_logprobs[t + 1];
        const double r = std::exp(log_r);
        const double term = grpo::clipped_term(r, adv[i], cfg.clip_eps);
        out.surrogate += w * term;
        const double coef = -w * grpo::clipped_term_slope(r, adv[i], cfg.clip_eps) * r;
        for (std::size_t t = 0; t < steps.size(); ++t) {
          const double c = coef + kl_at(t);
          if (c != 0.0) accumulate(out.grad, steps[t], c, T);
        }
      } else {
        const double inv_len = steps.empty() ? 0.0 : 1.0 / static_cast<double>(steps.size());
        for (std::size_t t = 0; t < steps.size(); ++t) {
          const double r = std::exp(steps[t].logprob - ro.old_logprobs[t + 1]);
          out.surrogate += w * inv_len * grpo::clipped_term(r, adv[i], cfg.clip_eps);
          const double coef = -w * inv_len * grpo::clipped_term_slope(r, adv[i], cfg.clip_eps) * r + kl_at(t);
          if (coef != 0.0) accumulate(out.grad, steps[t], coef, T);
        }
      }
    }
  }
  out.loss -= out.surrogate;
  if (!std::isfinite(out.loss) || !std::isfinite(grpo::l2_norm(out.grad))) {
    throw NonFiniteGradient("grpo objective or gradient is not finite");
  }
  return out;
}

std::vector<double> log_ratio(const PolicyParams& params, const grpo::Rollout& rollout,
                              const ConditionFeatures& features, grpo::RatioMode mode, double temperature) {
  rollout.validate();
  const auto lp = token_logprobs(params, features, rollout.tokens.tokens, temperature, rollout.max_len);
  const auto per = grpo::per_token_log_ratio(std::span(lp).subspan(1), std::span(rollout.old_logprobs).subspan(1));
  if (mode == grpo::RatioMode::per_token) return per;
  return {std::accumulate(per.begin(), per.end(), 0.0)};
}

double kl_estimate(const PolicyParams& params, const ReferenceModel& reference, const grpo::Rollout& rollout,
                   const ConditionFeatures& features, double temperature) {
  const auto p = token_logprobs(params, features, rollout.tokens.tokens, temperature, rollout.max_len);
  const auto q = reference.token_logprobs(features, rollout.tokens.tokens, temperature, rollout.max_len);
  return grpo::kl_estimate(std::span(p).subspan(1), std::span(q).subspan(1));
}

SvgSource decode_tokens(std::span<const std::int32_t> tokens) {
  GrammarState st;
  try {
    st = grammar_state(tokens);
  } catch (const InvalidPrefix& e) {
    throw InvalidSequence(e.what());
  }
  if (st.slot != Slot::done) throw InvalidSequence("sequence does not end with EOS after a complete primitive");

  std::string out = R"(<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 32 32">)";
  std::size_t i = 1;
  auto bin = [&](std::size_t k) { return static_cast<double>(tokens[k] - V::coord_base); };
  while (tokens[i] != V::eos) {
    const std::int32_t op = tokens[i];
    const std::size_t a = i + 1;
    const std::size_t color_pos = a + V::arity(op);
    const std::string color = color_hex(tokens[color_pos] - V::color_base);
    if (op == V::rect) {
      out += "<rect x=\"" + fmt_num(bin(a)) + "\" y=\"" + fmt_num(bin(a + 1)) + "\" width=\"" +
             fmt_num(bin(a + 2) + 1) + "\" height=\"" + fmt_num(bin(a + 3) + 1) + "\" fill=\"" + color + "\"/>";
    } else if (op == V::circle) {
      out += "<circle cx=\"" + fmt_num(bin(a) + 0.5) + "\" cy=\"" + fmt_num(bin(a + 1) + 0.5) + "\" r=\"" +
             fmt_num((bin(a + 2) + 1) / 2) + "\" fill=\"" + color + "\"/>";
    } else {
      out += "<line x1=\"" + fmt_num(bin(a) + 0.5) + "\" y1=\"" + fmt_num(bin(a + 1) + 0.5) + "\" x2=\"" +
             fmt_num(bin(a + 2) + 0.5) + "\" y2=\"" + fmt_num(bin(a + 3) + 0.5) + "\" stroke=\"" + color +
             "\" stroke-width=\"1\"/>";
    }
    i = color_pos + 1;
  }
  out += "</svg>";
  return {out};
}

namespace {

int parse_bin(const xml::Node& n, const char* key, double offset, double scale) {
  const std::string* s = n.attribute(key);
  if (!s) throw InvalidSequence(n.name + " is missing '" + key + "'");
  double v;
  try {
    std::size_t used = 0;
    v = std::stod(*s, &used);
    if (used != s->size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw InvalidSequence(n.name + "." + key + " is not a number: " + *s);
  }
  const double b = v * scale - offset;
  const double r = std::round(b);
  if (std::abs(b - r) > 1e-9 || r < 0 || r >= V::coord_bins) {
    throw InvalidSequence(n.name + "." + key + " is not on the coordinate grid: " + *s);
  }
  return static_cast<int>(r);
}

int parse_color(const xml::Node& n, const char* key) {
  const std::string* s = n.attribute(key);
  if (!s) throw InvalidSequence(n.name + " is missing '" + key + "'");
  for (int i = 0; i < V::color_count; ++i) {
    if (*s == color_hex(i)) return i;
  }
  throw InvalidSequence("color not in the palette: " + *s);
}

void expect_attributes(const xml::Node& n, std::initializer_list<const char*> keys) {
  if (n.attributes.size() != keys.size() || !n.children.empty()) {
    throw InvalidSequence("unexpected attributes or children on <" + n.name + ">");
  }
  for (const char* k : keys) {
    if (!n.attribute(k)) throw InvalidSequence(n.name + " is missing '" + k + "'");
  }
}

}  // namespace

TokenSequence encode_svg(const SvgSource& svg) {
  xml::Node root;
  try {
    root = xml::parse(svg.text);
  } catch (const RenderError& e) {
    throw InvalidSequence(std::string("not well-formed: ") + e.what());
  }
  const std::string* vb = root.attribute("viewBox");
  if (root.name != "svg" || !vb || *vb != "0 0 32 32") throw InvalidSequence("root must be <svg viewBox=\"0 0 32 32\">");
  if (root.children.empty()) throw InvalidSequence("no primitives");
  TokenSequence seq{{V::bos}, V::id};
  auto& t = seq.tokens;
  for (const auto& n : root.children) {
    if (n.name == "rect") {
      expect_attributes(n, {"x", "y", "width", "height", "fill"});
      t.insert(t.end(), {V::rect, V::coord(parse_bin(n, "x", 0, 1)), V::coord(parse_bin(n, "y", 0, 1)),
                         V::coord(parse_bin(n, "width", 1, 1)), V::coord(parse_bin(n, "height", 1, 1)),
                         V::color(parse_color(n, "fill"))});
    } else if (n.name == "circle") {
      expect_attributes(n, {"cx", "cy", "r", "fill"});
      t.insert(t.end(), {V::circle, V::coord(parse_bin(n, "cx", 0.5, 1)), V::coord(parse_bin(n, "cy", 0.5, 1)),
                         V::coord(parse_bin(n, "r", 1, 2)), V::color(parse_color(n, "fill"))});
    } else if (n.name == "line") {
      expect_attributes(n, {"x1", "y1", "x2", "y2", "stroke", "stroke-width"});
      if (*n.attribute("stroke-width") != "1") throw InvalidSequence("line stroke-width must be 1");
      t.insert(t.end(), {V::line, V::coord(parse_bin(n, "x1", 0.5, 1)), V::coord(parse_bin(n, "y1", 0.5, 1)),
                         V::coord(parse_bin(n, "x2", 0.5, 1)), V::coord(parse_bin(n, "y2", 0.5, 1)),
                         V::color(parse_color(n, "stroke"))});
    } else {
      throw InvalidSequence("unsupported element <" + n.name + ">");
    }
  }
  t.push_back(V::eos);
  return seq;
}

Target random_target(std::uint64_t seed, int canvas) {
  // Distinct streams for neighbouring seeds.
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  auto uniform = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  struct Primitive {
    std::vector<std::int32_t> tokens;
    double area;
  };
  std::vector<Primitive> prims(static_cast<std::size_t>(uniform(1, 5)));
  for (auto& p : prims) {
    const std::int32_t op = V::rect + uniform(0, 2);
    p.tokens.push_back(op);
    if (op == V::rect) {
      const int w = uniform(3, 20), h = uniform(3, 20);
      p.tokens.insert(p.tokens.end(), {V::coord(uniform(0, 31 - w)), V::coord(uniform(0, 31 - h)), V::coord(w),
                                       V::coord(h)});
      p.area = (w + 1.0) * (h + 1.0);
    } else if (op == V::circle) {
      const int r = uniform(3, 15);
      p.tokens.insert(p.tokens.end(), {V::coord(uniform(0, 31)), V::coord(uniform(0, 31)), V::coord(r)});
      p.area = 3.14159265358979 * (r + 1.0) * (r + 1.0) / 4.0;
    } else {
      int c[4];
      for (int& v : c) v = uniform(0, 31);
      p.tokens.insert(p.tokens.end(), {V::coord(c[0]), V::coord(c[1]), V::coord(c[2]), V::coord(c[3])});
      p.area = std::hypot(c[2] - c[0], c[3] - c[1]);
    }
    p.tokens.push_back(V::color(uniform(0, V::color_count - 1)));
  }
  // Painter's order: large shapes first, details on top.
  std::stable_sort(prims.begin(), prims.end(), [](const auto& a, const auto& b) { return a.area > b.area; });
  TokenSequence seq{{V::bos}, V::id};
  for (const auto& p : prims) seq.tokens.insert(seq.tokens.end(), p.tokens.begin(), p.tokens.end());
  seq.tokens.push_back(V::eos);
  Target out;
  out.svg = decode_tokens(seq.tokens);
  out.tokens = std::move(seq);
  RenderSpec spec;
  spec.ref_width = canvas;
  spec.ref_height = canvas;
  out.image = render_svg(out.svg, spec);
  return out;
}

namespace {

constexpr char kMagic[] = "RLRFCKPT";

void write_doubles(std::ofstream& f, std::span<const double> v) {
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& f, std::span<double> v) {
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw Error("checkpoint is truncated");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  const auto& m = ckpt.optimizer.m;
  const auto& v = ckpt.optimizer.v;
  if (m.size() != v.size() || (!m.empty() && m.size() != PolicyParams::count())) {
    throw Error("checkpoint: optimizer state does not match the parameter count");
  }
  nlohmann::json header = {{"version", kCheckpointVersion},
                           {"vocab", V::id},
                           {"param_count", PolicyParams::count()},
                           {"stage", ckpt.stage},
                           {"step", ckpt.step},
                           {"adam_t", ckpt.optimizer.t},
                           {"adam_size", m.size()},
                           {"meta", ckpt.meta}};
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + tmp.string());
    f << kMagic << '\n' << header.dump() << '\n';
    write_doubles(f, ckpt.params.values());
    write_doubles(f, m);
    write_doubles(f, v);
    if (!f) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(f, magic);
  if (magic != kMagic) throw Error("not a checkpoint file: " + path.string());
  std::getline(f, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (header.value("version", -1) != kCheckpointVersion) throw Error("unsupported checkpoint version");
  if (header.value("vocab", std::string()) != V::id ||
      header.value("param_count", std::size_t{0}) != PolicyParams::count()) {
    throw Error("checkpoint was written for a different policy layout");
  }
  Checkpoint ckpt;
  ckpt.stage = header.value("stage", std::string());
  ckpt.step = header.value("step", 0);
  ckpt.meta = header.value("meta", nlohmann::json::object());
  ckpt.optimizer.t = header.value("adam_t", std::int64_t{0});
  const auto adam_size = header.value("adam_size", std::size_t{0});
  if (adam_size != 0 && adam_size != PolicyParams::count()) throw Error("checkpoint optimizer state has the wrong size");
  read_doubles(f, ckpt.params.values());
  ckpt.optimizer.m.resize(adam_size);
  ckpt.optimizer.v.resize(adam_size);
  read_doubles(f, ckpt.optimizer.m);
  read_doubles(f, ckpt.optimizer.v);
  return ckpt;
}

}  // namespace rlrf::policy
