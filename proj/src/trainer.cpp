#include "rlrf/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "rlrf/error.hpp"

namespace rlrf::train {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  // splitmix64 finalizer over a running combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

std::vector<policy::Target> make_targets(std::uint64_t first_seed, std::size_t count, int canvas) {
  std::vector<policy::Target> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = policy::random_target(first_seed + i, canvas); });
  return out;
}

void SftOptions::validate() const {
  if (steps < 0) throw ConfigError("policy.sft_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("policy.batch_size must be >= 1");
  if (dataset_size < 1) throw ConfigError("policy.dataset_size must be >= 1");
  if (!(lr > 0)) throw ConfigError("policy.sft_lr must be > 0");
  if (canvas < 8) throw ConfigError("policy.canvas must be >= 8");
}

SftOptions SftOptions::from_json(const nlohmann::json& j) { return from_json(j, SftOptions{}); }

SftOptions SftOptions::from_json(const nlohmann::json& j, SftOptions o) {
  if (!j.is_object()) throw ConfigError("policy section must be an object");
  const nlohmann::json known = SftOptions{}.to_json();
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("unknown key policy." + item.key());
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("policy.") + key + " has the wrong type");
    }
  };
  get("sft_steps", o.steps);
  get("batch_size", o.batch_size);
  get("dataset_size", o.dataset_size);
  get("sft_lr", o.lr);
  get("sft_weight_decay", o.weight_decay);
  get("sft_max_grad_norm", o.max_grad_norm);
  get("canvas", o.canvas);
  get("data_seed", o.data_seed);
  o.validate();
  return o;
}

nlohmann::json SftOptions::to_json() const {
  return {{"sft_steps", steps},     {"batch_size", batch_size}, {"dataset_size", dataset_size},
          {"sft_lr", lr},           {"sft_weight_decay", weight_decay},
          {"sft_max_grad_norm", max_grad_norm},                 {"canvas", canvas},
          {"data_seed", data_seed}};
}

std::vector<policy::SftExample> make_sft_examples(std::span<const policy::Target> targets) {
  std::vector<policy::SftExample> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back({policy::featurize(t.image), t.tokens});
  return out;
}

namespace {

// Loss gradients summed over `parts` batches, computed in parallel.
template <typename Fn>
std::vector<double> sum_gradients(std::size_t parts, Fn&& fn, double& loss, unsigned threads = 0) {
  std::vector<policy::LossAndGrad> partial(parts);
  parallel_for(parts, [&](std::size_t i) { partial[i] = fn(i); }, threads);
  std::vector<double> grad(policy::PolicyParams::count(), 0.0);
  loss = 0;
  for (const auto& p : partial) {
    loss += p.loss;
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += p.grad[k];
  }
  return grad;
}

}  // namespace

void run_sft(policy::Checkpoint& ckpt, std::span<const policy::SftExample> data, const SftOptions& opts,
             const LogSink& log) {
  opts.validate();
  if (data.empty()) throw InsufficientRecords("SFT needs at least one example");
  grpo::AdamOptions adam;
  adam.lr = opts.lr;
  adam.weight_decay = opts.weight_decay;
  adam.max_grad_norm = opts.max_grad_norm;
  const std::size_t batch = std::min<std::size_t>(opts.batch_size, data.size());
  constexpr std::size_t kShards = 4;
  for (int step = ckpt.step; step < opts.steps; ++step) {
    std::mt19937_64 rng(derive_seed(opts.seed, 0x5F7, static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
    std::vector<policy::SftExample> mb;
    mb.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) mb.push_back(data[idx[i]]);

    // Shards are summed in a fixed order so results do not depend on scheduling.
    const std::size_t shards = std::min(kShards, batch);
    double nll = 0;
    auto grad = sum_gradients(
        shards,
        [&](std::size_t s) {
          const std::size_t lo = s * batch / shards, hi = (s + 1) * batch / shards;
          auto part = policy::sft_loss_and_grad(ckpt.params, std::span(mb).subspan(lo, hi - lo));
          const double w = static_cast<double>(hi - lo) / static_cast<double>(batch);
          part.loss *= w;
          for (double& g : part.grad) g *= w;
          return part;
        },
        nll);
    const double norm = grpo::adam_step(ckpt.params.values(), grad, ckpt.optimizer, adam);
    ckpt.step = step + 1;
    if (log) {
      log({{"schema", kSftLogSchema}, {"step", step}, {"nll", nll}, {"lr", adam.lr}, {"grad_norm", norm}});
    }
  }
  ckpt.stage = "sft";
}

grpo::StepStats train_step(policy::PolicyParams& params, std::span<const policy::ConditionedGroup> groups,
                           const grpo::TrainConfig& cfg, grpo::AdamState& optimizer, int step,
                           const policy::ReferenceModel* reference) {
  cfg.validate();
  auto obj = policy::grpo_loss_and_grad(params, groups, cfg, cfg.kl_beta > 0 ? reference : nullptr);

  grpo::StepStats stats;
  std::vector<double> rewards;
  double len = 0;
  for (const auto& g : groups) {
    for (const auto& r : g.group.rollouts) {
      rewards.push_back(r.reward);
      len += static_cast<double>(r.tokens.size());
    }
  }
  const double n = static_cast<double>(rewards.size());
  stats.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0;
  for (double r : rewards) var += (r - stats.mean_reward) * (r - stats.mean_reward);
  stats.reward_std = std::sqrt(var / n);
  stats.mean_seq_length = len / n;
  stats.mean_kl = obj.mean_kl;
  stats.surrogate_value = obj.surrogate;
  stats.grad_norm = grpo::l2_norm(obj.grad);
  if (stats.grad_norm == 0.0) return stats;

  grpo::AdamOptions adam;
  adam.lr = grpo::lr_schedule(step, cfg);
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.eps = cfg.adam_eps;
  adam.weight_decay = cfg.weight_decay;
  adam.max_grad_norm = cfg.max_grad_norm;
  grpo::adam_step(params.values(), obj.grad, optimizer, adam);
  return stats;
}

StepBatch collect_rollouts(const policy::PolicyParams& params, std::span<const policy::Target> targets,
                           const RewardSpec& spec, const grpo::TrainConfig& cfg, int step,
                           const GrpoRunOptions& opts) {
  if (targets.empty()) throw InsufficientRecords("GRPO needs at least one target");
  StepBatch batch;

  // Conditions without replacement when the pool allows it.
  std::mt19937_64 rng(derive_seed(opts.seed, 0xC0D, static_cast<std::uint64_t>(step)));
  std::vector<std::size_t> pool(targets.size());
  std::iota(pool.begin(), pool.end(), 0);
  for (int c = 0; c < cfg.conditions_per_step; ++c) {
    const std::size_t k = static_cast<std::size_t>(c) % pool.size();
    if (k == 0) std::shuffle(pool.begin(), pool.end(), rng);
    batch.target_indices.push_back(pool[k]);
  }

  std::vector<std::size_t> gt_lengths;
  for (auto i : batch.target_indices) gt_lengths.push_back(targets[i].tokens.size());
  batch.max_len = grpo::dynamic_max_length(gt_lengths, static_cast<std::size_t>(cfg.dyn_len_threshold));
  batch.max_gt_length = *std::max_element(gt_lengths.begin(), gt_lengths.end());
  batch.mean_gt_length = std::accumulate(gt_lengths.begin(), gt_lengths.end(), 0.0) / gt_lengths.size();

  batch.length_weight = grpo::length_weight_schedule(step, cfg);
  const RewardSpec step_spec = spec.with_weight(RewardKind::length, batch.length_weight);

  const std::size_t C = batch.target_indices.size();
  const std::size_t G = static_cast<std::size_t>(cfg.group_size);
  batch.groups.resize(C);
  std::vector<std::size_t> gt_len(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto& t = targets[batch.target_indices[c]];
    batch.groups[c].features = policy::featurize(t.image);
    batch.groups[c].group.condition_id = "target-" + std::to_string(batch.target_indices[c]);
    batch.groups[c].group.rollouts.resize(G);
    gt_len[c] = t.tokens.size();
  }

  RenderSpec render;
  render.ref_width = opts.canvas;
  render.ref_height = opts.canvas;
  std::vector<double> image_reward(C * G, 0.0);
  parallel_for(
      C * G,
      [&](std::size_t k) {
        const std::size_t c = k / G, i = k % G;
        policy::SampleConfig sc;
        sc.temperature = cfg.temperature;
        sc.top_p = cfg.top_p;
        sc.max_len = batch.max_len;
        sc.seed = derive_seed(opts.seed, 0x5A3, static_cast<std::uint64_t>(step), k);
        auto ro = policy::sample_sequence(params, batch.groups[c].features, sc);
        const auto svg = policy::decode_tokens(ro.tokens.tokens);
        RewardContext ctx = opts.reward_context;
        ctx.pred_length = ro.tokens.size();
        const auto br = reward_rollout(targets[batch.target_indices[c]].image, svg, gt_len[c], step_spec, render, ctx);
        ro.reward = br.total;
        image_reward[k] = br.value(RewardKind::l2).value_or(0.0);
        batch.groups[c].group.rollouts[i] = std::move(ro);
      },
      opts.threads);

  for (const auto& g : batch.groups) {
    for (const auto& r : g.group.rollouts) batch.max_rollout_length = std::max(batch.max_rollout_length, r.tokens.size());
  }
  batch.mean_image_reward = std::accumulate(image_reward.begin(), image_reward.end(), 0.0) / image_reward.size();
  return batch;
}

void run_grpo(policy::Checkpoint& ckpt, std::span<const policy::Target> targets, const RewardSpec& spec,
              const grpo::TrainConfig& cfg, const GrpoRunOptions& opts, const policy::ReferenceModel* reference,
              const LogSink& log) {
  cfg.validate();
  spec.validate();
  if (cfg.kl_beta > 0 && !reference) throw ConfigError("kl_beta > 0 requires a reference policy");
  for (int step = ckpt.step; step < opts.steps; ++step) {
    auto batch = collect_rollouts(ckpt.params, targets, spec, cfg, step, opts);
    grpo::StepStats stats;
    for (int u = 0; u < cfg.inner_updates; ++u) {
      auto s = train_step(ckpt.params, batch.groups, cfg, ckpt.optimizer, step, reference);
      if (u == 0) stats = s;
    }
    ckpt.step = step + 1;
    if (log) {
      log({{"schema", kGrpoLogSchema},
           {"step", step},
           {"mean_reward", stats.mean_reward},
           {"reward_std", stats.reward_std},
           {"mean_kl", stats.mean_kl},
           {"mean_seq_length", stats.mean_seq_length},
           {"surrogate", stats.surrogate_value},
           {"grad_norm", stats.grad_norm},
           {"lr", grpo::lr_schedule(step, cfg)},
           {"length_weight", batch.length_weight},
           {"max_len", batch.max_len},
           {"max_rollout_length", batch.max_rollout_length},
           {"max_gt_length", batch.max_gt_length},
           {"mean_gt_length", batch.mean_gt_length},
           {"targets", batch.target_indices},
           {"mean_image_reward", batch.mean_image_reward}});
    }
  }
  ckpt.stage = "grpo";
}

double mean_image_reward(const policy::PolicyParams& params, std::span<const policy::Target> targets,
                         const EvalOptions& opts) {
  if (targets.empty()) throw InsufficientRecords("evaluation needs at least one target");
  const std::size_t n = static_cast<std::size_t>(opts.samples_per_target);
  std::vector<double> scores(targets.size() * n);
  RenderSpec render;
  render.ref_width = opts.canvas;
  render.ref_height = opts.canvas;
  parallel_for(
      scores.size(),
      [&](std::size_t k) {
        const auto& t = targets[k / n];
        policy::SampleConfig sc;
        sc.temperature = opts.temperature;
        sc.top_p = opts.top_p;
        sc.max_len = opts.max_len;
        sc.seed = derive_seed(opts.seed, 0xE7A, k);
        const auto ro = policy::sample_sequence(params, policy::featurize(t.image), sc);
        const auto pred = render_svg(policy::decode_tokens(ro.tokens.tokens), render);
        scores[k] = reward_l2(t.image, pred);
      },
      opts.threads);
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

}  // namespace rlrf::train
