#include "rlrf/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlrf/error.hpp"

namespace rlrf::grpo {

void Rollout::validate() const {
  if (old_logprobs.size() != tokens.size()) throw Error("Rollout: old_logprobs length must equal token count");
  if (!std::isfinite(reward)) throw Error("Rollout: reward must be finite");
}

void RolloutGroup::validate() const {
  if (rollouts.size() < 2) throw Error("RolloutGroup: at least two rollouts are required");
  for (const auto& r : rollouts) r.validate();
}

std::string to_string(RatioMode m) { return m == RatioMode::sequence ? "sequence" : "per_token"; }

RatioMode parse_ratio_mode(const std::string& s) {
  if (s == "sequence") return RatioMode::sequence;
  if (s == "per_token") return RatioMode::per_token;
  throw ConfigError("ratio_mode must be 'sequence' or 'per_token'");
}

void TrainConfig::validate() const {
  if (!(clip_eps > 0)) throw ConfigError("grpo: clip_eps must be > 0");
  if (group_size < 2) throw ConfigError("grpo: group_size must be >= 2");
  if (conditions_per_step < 1) throw ConfigError("grpo: conditions_per_step must be >= 1");
  if (!(temperature > 0)) throw ConfigError("grpo: temperature must be > 0");
  if (!(top_p > 0 && top_p <= 1)) throw ConfigError("grpo: top_p must be in (0, 1]");
  if (kl_beta < 0) throw ConfigError("grpo: kl_beta must be >= 0");
  if (lr_decay_every < 1) throw ConfigError("grpo: lr_decay_every must be >= 1");
  if (length_weight_ramp_steps < 0) throw ConfigError("grpo: length_weight_ramp_steps must be >= 0");
  if (dyn_len_threshold < 0) throw ConfigError("grpo: dyn_len_threshold must be >= 0");
  if (inner_updates < 1) throw ConfigError("grpo: inner_updates must be >= 1");
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("grpo section must be an object");
  const nlohmann::json known = TrainConfig{}.to_json();
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("unknown key grpo." + item.key());
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        field = j.at(key).get<std::decay_t<decltype(field)>>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("grpo.") + key + " has the wrong type");
      }
    }
  };
  get("group_size", c.group_size);
  get("conditions_per_step", c.conditions_per_step);
  get("clip_eps", c.clip_eps);
  get("kl_beta", c.kl_beta);
  get("lr0", c.lr0);
  get("lr_decay_factor", c.lr_decay_factor);
  get("lr_decay_every", c.lr_decay_every);
  get("temperature", c.temperature);
  get("top_p", c.top_p);
  get("std_normalize", c.std_normalize);
  if (j.contains("ratio_mode")) {
    if (!j["ratio_mode"].is_string()) throw ConfigError("grpo.ratio_mode has the wrong type");
    c.ratio_mode = parse_ratio_mode(j["ratio_mode"].get<std::string>());
  }
  get("length_weight_start", c.length_weight_start);
  get("length_weight_end", c.length_weight_end);
  get("length_weight_ramp_steps", c.length_weight_ramp_steps);
  get("dyn_len_threshold", c.dyn_len_threshold);
  get("inner_updates", c.inner_updates);
  get("max_grad_norm", c.max_grad_norm);
  get("weight_decay", c.weight_decay);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"group_size", group_size},
          {"conditions_per_step", conditions_per_step},
          {"clip_eps", clip_eps},
          {"kl_beta", kl_beta},
          {"lr0", lr0},
          {"lr_decay_factor", lr_decay_factor},
          {"lr_decay_every", lr_decay_every},
          {"temperature", temperature},
          {"top_p", top_p},
          {"std_normalize", std_normalize},
          {"ratio_mode", to_string(ratio_mode)},
          {"length_weight_start", length_weight_start},
          {"length_weight_end", length_weight_end},
          {"length_weight_ramp_steps", length_weight_ramp_steps},
          {"dyn_len_threshold", dyn_len_threshold},
          {"inner_updates", inner_updates},
          {"max_grad_norm", max_grad_norm},
          {"weight_decay", weight_decay},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps}};
}

std::vector<double> compute_advantages(std::span<const double> rewards, bool std_normalize) {
  if (rewards.size() < 2) throw Error("compute_advantages: group needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (std_normalize) {
    double var = 0;
    for (double a : adv) var += a * a;
    const double denom = std::max(std::sqrt(var / n), 1e-8);
    for (double& a : adv) a /= denom;
  }
  return adv;
}

std::vector<double> compute_advantages(const RolloutGroup& group, bool std_normalize) {
  std::vector<double> rewards;
  rewards.reserve(group.rollouts.size());
  for (const auto& r : group.rollouts) rewards.push_back(r.reward);
  return compute_advantages(rewards, std_normalize);
}

double sequence_log_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs) {
  if (new_logprobs.size() != old_logprobs.size()) throw LengthMismatch("log ratio: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < new_logprobs.size(); ++i) s += new_logprobs[i] - old_logprobs[i];
  return s;
}

std::vector<double> per_token_log_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs) {
  if (new_logprobs.size() != old_logprobs.size()) throw LengthMismatch("log ratio: length mismatch");
  std::vector<double> out(new_logprobs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = new_logprobs[i] - old_logprobs[i];
  return out;
}

double clipped_term(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_term_slope(double ratio, double advantage, double eps) {
  // For A >= 0 the unclipped branch wins while r < 1 + eps; for A < 0 while r > 1 - eps.
  if (advantage >= 0) return ratio < 1.0 + eps ? advantage : 0.0;
  return ratio > 1.0 - eps ? advantage : 0.0;
}

double grpo_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps) {
  if (ratios.size() != advantages.size()) throw LengthMismatch("grpo_surrogate: length mismatch");
  if (ratios.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) s += clipped_term(ratios[i], advantages[i], eps);
  return s / static_cast<double>(ratios.size());
}

double kl_token(double policy_logprob, double reference_logprob) {
  const double d = reference_logprob - policy_logprob;
  return std::expm1(d) - d;
}

double kl_token_slope(double policy_logprob, double reference_logprob) {
  return 1.0 - std::exp(reference_logprob - policy_logprob);
}

double kl_estimate(std::span<const double> policy_logprobs, std::span<const double> reference_logprobs) {
  if (policy_logprobs.size() != reference_logprobs.size()) throw LengthMismatch("kl_estimate: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < policy_logprobs.size(); ++i) s += kl_token(policy_logprobs[i], reference_logprobs[i]);
  return s;
}

double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 0) throw Error("lr_schedule: step must be >= 0");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, step / cfg.lr_decay_every);
}

std::size_t dynamic_max_length(std::span<const std::size_t> gt_lengths, std::size_t threshold) {
  if (gt_lengths.empty()) throw Error("dynamic_max_length: empty batch");
  return *std::max_element(gt_lengths.begin(), gt_lengths.end()) + threshold;
}

double length_weight_schedule(int step, const TrainConfig& cfg) {
  if (step < 0) throw Error("length_weight_schedule: step must be >= 0");
  if (cfg.length_weight_ramp_steps == 0 || step >= cfg.length_weight_ramp_steps) return cfg.length_weight_end;
  const double t = static_cast<double>(step) / cfg.length_weight_ramp_steps;
  return cfg.length_weight_start + t * (cfg.length_weight_end - cfg.length_weight_start);
}

double l2_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double adam_step(std::span<double> params, std::span<double> grad, AdamState& state, const AdamOptions& o) {
  if (params.size() != grad.size()) throw LengthMismatch("adam_step: gradient size mismatch");
  const double norm = l2_norm(grad);
  if (!std::isfinite(norm)) throw NonFiniteGradient("non-finite gradient (norm " + std::to_string(norm) + ")");
  if (o.max_grad_norm > 0 && norm > o.max_grad_norm) {
    const double scale = o.max_grad_norm / norm;
    for (double& g : grad) g *= scale;
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = o.beta1 * state.m[i] + (1 - o.beta1) * grad[i];
    state.v[i] = o.beta2 * state.v[i] + (1 - o.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= o.lr * (mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * params[i]);
  }
  return norm;
}

}  // namespace rlrf::grpo
