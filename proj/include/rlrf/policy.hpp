#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlrf/grpo.hpp"
#include "rlrf/image.hpp"
#include "rlrf/svg.hpp"

// Desk-scale stand-in for the SVG-writing model: a conditional
// autoregressive categorical policy over a tiny primitive grammar with a
// linear logit map, so every gradient is analytic.
namespace rlrf::policy {

// Token layout: BOS, EOS, three opcodes, 32 coordinate bins, 16 palette colors.
struct MiniVocab {
  static constexpr std::int32_t bos = 0;
  static constexpr std::int32_t eos = 1;
  static constexpr std::int32_t rect = 2;
  static constexpr std::int32_t circle = 3;
  static constexpr std::int32_t line = 4;
  static constexpr std::int32_t coord_base = 5;
  static constexpr std::int32_t coord_bins = 32;
  static constexpr std::int32_t color_base = coord_base + coord_bins;
  static constexpr std::int32_t color_count = 16;
  static constexpr std::int32_t size = color_base + color_count;

  static constexpr const char* id = "toy-svg-v1";

  static bool is_opcode(std::int32_t t) { return t >= rect && t <= line; }
  static bool is_coord(std::int32_t t) { return t >= coord_base && t < coord_base + coord_bins; }
  static bool is_color(std::int32_t t) { return t >= color_base && t < color_base + color_count; }
  static std::int32_t coord(int bin) { return coord_base + bin; }
  static std::int32_t color(int index) { return color_base + index; }

  // Number of coordinate arguments after an opcode.
  static int arity(std::int32_t opcode) { return opcode == circle ? 3 : 4; }

  static const std::array<Rgb, color_count>& palette();
};

// Grammar slot of the next token. Argument slots are distinct per opcode so
// the condition features can be routed per slot.
enum class Slot : int {
  op = 0,
  rect_x, rect_y, rect_w, rect_h,
  circle_cx, circle_cy, circle_r,
  line_x1, line_y1, line_x2, line_y2,
  color,
  done,
};
inline constexpr int kSlotCount = static_cast<int>(Slot::done);

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max() / 2;

struct GrammarState {
  Slot slot = Slot::op;
  std::size_t length = 0;   // tokens in the prefix, BOS included
  int primitives = 0;       // completed primitives
};

// Throws InvalidPrefix unless the prefix starts with BOS and follows the grammar.
GrammarState grammar_state(std::span<const std::int32_t> prefix);

// Tokens that may follow `state` without exceeding max_len total tokens.
// Always non-empty for a state reachable under the same cap.
std::array<bool, MiniVocab::size> allowed_tokens(const GrammarState& state, std::size_t max_len = kUnlimited);

// Shortest complete sequence: BOS, circle, 3 coords, color, EOS.
inline constexpr std::size_t kMinSequenceLength = 7;

// Mean-centred 8x8x3 area downsample of the condition image.
struct ConditionFeatures {
  static constexpr int side = 8;
  static constexpr std::size_t size = side * side * 3;
  std::vector<double> values;
};

ConditionFeatures featurize(const RasterImage& img);

// Dense weights over a sparse input made of
//   routed condition features (one 192-wide block per grammar slot and
//   primitive index, indices past route_primitives - 1 sharing the last block),
//   one-hots of the last `history` tokens (with a padding symbol),
//   one-hots of the grammar slot and the primitive index,
// plus a bias per vocabulary entry.
class PolicyParams {
 public:
  static constexpr int history = 4;
  static constexpr int max_primitive_index = 8;
  static constexpr int route_primitives = 5;
  static constexpr std::size_t condition_block = ConditionFeatures::size;
  static constexpr std::size_t history_offset = condition_block * kSlotCount * route_primitives;
  static constexpr std::size_t history_width = MiniVocab::size + 1;
  static constexpr std::size_t slot_offset = history_offset + history * history_width;
  static constexpr std::size_t primitive_offset = slot_offset + kSlotCount;
  static constexpr std::size_t input_dim = primitive_offset + max_primitive_index;
  static constexpr std::size_t vocab = MiniVocab::size;

  PolicyParams() : values_(count(), 0.0) {}

  static constexpr std::size_t count() { return vocab * input_dim + vocab; }
  static PolicyParams random(std::uint64_t seed, double scale);

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& weight(std::size_t token, std::size_t input) { return values_[token * input_dim + input]; }
  double weight(std::size_t token, std::size_t input) const { return values_[token * input_dim + input]; }
  double& bias(std::size_t token) { return values_[vocab * input_dim + token]; }
  double bias(std::size_t token) const { return values_[vocab * input_dim + token]; }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  std::vector<double> values_;
};

// Active (index, value) entries of the input vector for the next token.
struct SparseInput {
  std::vector<std::pair<std::size_t, double>> entries;
};

SparseInput policy_input(const ConditionFeatures& features, std::span<const std::int32_t> prefix,
                         const GrammarState& state);

using Logits = std::array<double, MiniVocab::size>;

// Masked logits for the next token; disallowed tokens are -infinity.
// Throws InvalidPrefix.
Logits logits(const PolicyParams& params, const ConditionFeatures& features, std::span<const std::int32_t> prefix,
              std::size_t max_len = kUnlimited);

// Softmax of logits / temperature over finite entries.
std::array<double, MiniVocab::size> softmax(const Logits& z, double temperature = 1.0);

struct SampleConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  std::size_t max_len = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

// Draws BOS ... EOS. old_logprobs[0] (BOS) is 0; the rest are log-probabilities
// under the tempered, nucleus-truncated distribution actually sampled from.
grpo::Rollout sample_sequence(const PolicyParams& params, const ConditionFeatures& features, const SampleConfig& cfg);

// Per-token log-probabilities of `tokens` (index 0, the BOS, gets 0) under
// softmax(logits / temperature) with the grammar cap max_len.
std::vector<double> token_logprobs(const PolicyParams& params, const ConditionFeatures& features,
                                   std::span<const std::int32_t> tokens, double temperature = 1.0,
                                   std::size_t max_len = kUnlimited);

// Teacher-forced log p(tokens | features) at temperature 1.
double sequence_logprob(const PolicyParams& params, const ConditionFeatures& features,
                        std::span<const std::int32_t> tokens);

struct SftExample {
  ConditionFeatures features;
  TokenSequence tokens;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d params
};

// Mean over the batch of -sequence_logprob, with its analytic gradient.
LossAndGrad sft_loss_and_grad(const PolicyParams& params, std::span<const SftExample> batch);

// Log-probabilities under a frozen reference model, used by the KL term.
class ReferenceModel {
 public:
  virtual ~ReferenceModel() = default;
  virtual std::vector<double> token_logprobs(const ConditionFeatures& features, std::span<const std::int32_t> tokens,
                                             double temperature, std::size_t max_len) const = 0;
};

class FrozenPolicy final : public ReferenceModel {
 public:
  explicit FrozenPolicy(PolicyParams params) : params_(std::move(params)) {}
  std::vector<double> token_logprobs(const ConditionFeatures& features, std::span<const std::int32_t> tokens,
                                     double temperature, std::size_t max_len) const override;

 private:
  PolicyParams params_;
};

// A rollout group together with the condition it was sampled for.
struct ConditionedGroup {
  ConditionFeatures features;
  grpo::RolloutGroup group;
};

struct GrpoObjective {
  double loss = 0.0;       // -(surrogate - beta * KL)
  double surrogate = 0.0;  // mean over groups of the clipped surrogate
  double mean_kl = 0.0;    // mean per-rollout KL estimate (0 when beta = 0)
  std::vector<double> grad;
};

// Clipped-surrogate objective over groups, minus beta * KL when beta > 0,
// returned as a loss to minimize with its analytic gradient. `reference` is
// only consulted when cfg.kl_beta > 0. Throws NonFiniteGradient.
GrpoObjective grpo_loss_and_grad(const PolicyParams& params, std::span<const ConditionedGroup> groups,
                                 const grpo::TrainConfig& cfg, const ReferenceModel* reference = nullptr);

// log r for one rollout: a single-element vector in sequence mode, one
// entry per token in per-token mode.
std::vector<double> log_ratio(const PolicyParams& params, const grpo::Rollout& rollout,
                              const ConditionFeatures& features, grpo::RatioMode mode, double temperature);

// Per-rollout KL estimate of params against reference along the rollout.
double kl_estimate(const PolicyParams& params, const ReferenceModel& reference, const grpo::Rollout& rollout,
                   const ConditionFeatures& features, double temperature);

// Grammar-directed detokenizer: rect/circle/line on a 32 x 32 viewBox.
// Throws InvalidSequence.
SvgSource decode_tokens(std::span<const std::int32_t> tokens);

// Inverse of decode_tokens for SVG text in exactly that form. Throws InvalidSequence.
TokenSequence encode_svg(const SvgSource& svg);

struct Target {
  SvgSource svg;
  TokenSequence tokens;
  RasterImage image;
};

inline constexpr int kCanvasSize = 64;

// 1-5 random primitives rendered at canvas x canvas; deterministic per seed.
Target random_target(std::uint64_t seed, int canvas = kCanvasSize);

// Versioned checkpoint: magic line, JSON header, raw little-endian doubles.
struct Checkpoint {
  PolicyParams params;
  grpo::AdamState optimizer;
  int step = 0;
  std::string stage;  // "init", "sft" or "grpo"
  nlohmann::json meta = nlohmann::json::object();
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rlrf::policy
