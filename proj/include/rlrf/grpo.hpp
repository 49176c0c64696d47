#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlrf/svg.hpp"

namespace rlrf::grpo {

// One sampled output o_i with the log-probabilities it had under the
// sampling policy and its scalar reward R(x_c, o_i).
struct Rollout {
  TokenSequence tokens;
  std::vector<double> old_logprobs;  // same length as tokens
  double reward = 0.0;
  std::size_t max_len = 0;           // sampling cap the rollout was drawn under

  void validate() const;
};

// G rollouts sharing one condition x_c.
struct RolloutGroup {
  std::string condition_id;
  std::vector<Rollout> rollouts;

  void validate() const;
};

enum class RatioMode { sequence, per_token };

std::string to_string(RatioMode m);
RatioMode parse_ratio_mode(const std::string& s);

struct TrainConfig {
  int group_size = 16;
  int conditions_per_step = 8;
  double clip_eps = 0.4;
  double kl_beta = 0.0;
  double lr0 = 1e-5;
  double lr_decay_factor = 0.7;
  int lr_decay_every = 100;
  double temperature = 1.1;
  double top_p = 1.0;
  bool std_normalize = false;
  RatioMode ratio_mode = RatioMode::sequence;
  double length_weight_start = 0.1;
  double length_weight_end = 0.5;
  int length_weight_ramp_steps = 200;
  int dyn_len_threshold = 8;
  int inner_updates = 1;  // optimizer updates per batch of rollouts
  double max_grad_norm = 1.0;
  double weight_decay = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  nlohmann::json to_json() const;
};

struct StepStats {
  double mean_reward = 0.0;
  double reward_std = 0.0;
  double mean_kl = 0.0;
  double mean_seq_length = 0.0;
  double surrogate_value = 0.0;
  double grad_norm = 0.0;
};

// A_i = R_i - mean_j R_j, optionally divided by max(std, 1e-8).
std::vector<double> compute_advantages(const RolloutGroup& group, bool std_normalize = false);
std::vector<double> compute_advantages(std::span<const double> rewards, bool std_normalize = false);

// Sum over tokens of (new - old) log-probabilities.
double sequence_log_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs);
std::vector<double> per_token_log_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs);

// min(r A, clip(r, 1 - eps, 1 + eps) A) for one sample.
double clipped_term(double ratio, double advantage, double eps);

// d clipped_term / d ratio; zero where the clipped branch is selected.
double clipped_term_slope(double ratio, double advantage, double eps);

// mean_i min(r_i A_i, clip(r_i, 1 - eps, 1 + eps) A_i).
double grpo_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps);

// sum_t (q_t/p_t - log(q_t/p_t) - 1) along a trajectory sampled from p.
// Unbiased for KL(p || q), non-negative per sample, zero when p = q, and its
// gradient at the sampling policy pulls p toward q.
double kl_estimate(std::span<const double> policy_logprobs, std::span<const double> reference_logprobs);

// One token's term of kl_estimate and its derivative with respect to log p.
double kl_token(double policy_logprob, double reference_logprob);
double kl_token_slope(double policy_logprob, double reference_logprob);

// lr0 * factor^(floor(step / every)).
double lr_schedule(int step, const TrainConfig& cfg);

// Longest ground-truth length in the batch plus threshold t.
std::size_t dynamic_max_length(std::span<const std::size_t> gt_lengths, std::size_t threshold);

// Linear ramp from length_weight_start to length_weight_end, constant afterwards.
double length_weight_schedule(int step, const TrainConfig& cfg);

// AdamW on a flat parameter vector, minimizing a loss.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double max_grad_norm = 0.0;  // <= 0 disables clipping
};

// Clips `grad` to max_grad_norm in place, then applies one AdamW update.
// Returns the gradient norm before clipping. Throws NonFiniteGradient.
double adam_step(std::span<double> params, std::span<double> grad, AdamState& state, const AdamOptions& options);

double l2_norm(std::span<const double> v);

}  // namespace rlrf::grpo
