#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlrf/grpo.hpp"
#include "rlrf/policy.hpp"
#include "rlrf/reward.hpp"

namespace rlrf::train {

inline constexpr const char* kSftLogSchema = "rlrf.sft.v1";
inline constexpr const char* kGrpoLogSchema = "rlrf.grpo.v1";

// Receives one JSON object per logged step.
using LogSink = std::function<void(const nlohmann::json&)>;

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

// Mixes a base seed with stream coordinates into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// `count` synthetic targets from consecutive seeds starting at first_seed.
std::vector<policy::Target> make_targets(std::uint64_t first_seed, std::size_t count, int canvas = policy::kCanvasSize);

struct SftOptions {
  int steps = 300;
  int batch_size = 32;
  int dataset_size = 500;
  double lr = 0.02;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;
  int canvas = policy::kCanvasSize;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 1'000'000;  // first seed of the synthetic pairs

  void validate() const;
  static SftOptions from_json(const nlohmann::json& j);
  static SftOptions from_json(const nlohmann::json& j, SftOptions base);
  nlohmann::json to_json() const;
};

std::vector<policy::SftExample> make_sft_examples(std::span<const policy::Target> targets);

// Continues from ckpt.step up to opts.steps teacher-forced AdamW updates,
// logging {schema, step, nll, lr, grad_norm} per step. Minibatches depend only
// on (seed, step), so a resumed run matches an uninterrupted one.
void run_sft(policy::Checkpoint& ckpt, std::span<const policy::SftExample> data, const SftOptions& opts,
             const LogSink& log = {});

// One optimizer update of the GRPO objective over a batch of groups, at the
// learning rate lr_schedule(step). A zero gradient leaves the parameters and
// optimizer state untouched. Throws NonFiniteGradient without modifying anything.
grpo::StepStats train_step(policy::PolicyParams& params, std::span<const policy::ConditionedGroup> groups,
                           const grpo::TrainConfig& cfg, grpo::AdamState& optimizer, int step,
                           const policy::ReferenceModel* reference = nullptr);

struct GrpoRunOptions {
  int steps = 300;
  int canvas = policy::kCanvasSize;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  RewardContext reward_context;
};

// Result of sampling and scoring one step's rollouts.
struct StepBatch {
  std::vector<policy::ConditionedGroup> groups;
  std::vector<std::size_t> target_indices;
  std::size_t max_len = 0;             // sampling cap for this step
  std::size_t max_rollout_length = 0;  // longest sampled rollout
  std::size_t max_gt_length = 0;
  double mean_gt_length = 0.0;
  double mean_image_reward = 0.0;      // mean of the l2 component, when present
  double length_weight = 0.0;
};

// Picks conditions, sets the dynamic cap, samples G rollouts per condition in
// parallel and scores them with `spec` (length weight taken from the ramp).
StepBatch collect_rollouts(const policy::PolicyParams& params, std::span<const policy::Target> targets,
                           const RewardSpec& spec, const grpo::TrainConfig& cfg, int step,
                           const GrpoRunOptions& opts);

// Stage-two loop from ckpt.step to opts.steps. Every step samples from the
// current parameters (the old-policy snapshot), then applies
// cfg.inner_updates optimizer updates. Logs the StepStats fields plus lr,
// length_weight, max_len, max_rollout_length, max_gt_length, mean_gt_length
// and the target indices of the batch.
void run_grpo(policy::Checkpoint& ckpt, std::span<const policy::Target> targets, const RewardSpec& spec,
              const grpo::TrainConfig& cfg, const GrpoRunOptions& opts, const policy::ReferenceModel* reference,
              const LogSink& log = {});

struct EvalOptions {
  int samples_per_target = 4;
  double temperature = 1.1;
  double top_p = 1.0;
  std::size_t max_len = 64;
  std::uint64_t seed = 0;
  int canvas = policy::kCanvasSize;
  unsigned threads = 0;
};

// Mean l2 image reward of sampled outputs against each target.
double mean_image_reward(const policy::PolicyParams& params, std::span<const policy::Target> targets,
                         const EvalOptions& opts);

}  // namespace rlrf::train
