// rlrf: command line front end over the library.
//
// Exit codes: 0 ok, 2 configuration or usage error, 3 data error,
// 4 numeric failure, 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rlrf/config.hpp"
#include "rlrf/curation.hpp"
#include "rlrf/error.hpp"
#include "rlrf/metrics.hpp"
#include "rlrf/policy.hpp"
#include "rlrf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rlrf;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

// Raised for unreadable or malformed inputs that are not library errors.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::optional<int> ref_width, ref_height;
  std::string log_path;
};

AppConfig load(const Common& c) {
  AppConfig cfg = c.config_path.empty() ? AppConfig{} : load_config(c.config_path);
  if (c.ref_width) cfg.render.ref_width = *c.ref_width;
  if (c.ref_height) cfg.render.ref_height = *c.ref_height;
  cfg.render.validate();
  return cfg;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Append-only JSONL sink; a no-op without a path.
class JsonlLog {
 public:
  explicit JsonlLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::app);
    if (!out_) throw DataError("cannot open log file " + path);
  }
  void operator()(const json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
    out_.flush();
  }
  train::LogSink sink() {
    return [this](const json& j) { (*this)(j); };
  }

 private:
  std::ofstream out_;
};

struct ManifestEntry {
  json raw;
  std::string id;
  fs::path svg_path;
  std::optional<fs::path> png_path;
};

// JSONL lines {id, svg_path, png_path?}; relative paths resolve against the manifest.
std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": not valid JSON");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("svg_path") ||
        !j["svg_path"].is_string() || (j.contains("png_path") && !j["png_path"].is_string())) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected {id, svg_path, png_path?}");
    }
    ManifestEntry e{j, j["id"], resolve(j["svg_path"]), std::nullopt};
    if (j.contains("png_path")) e.png_path = resolve(j["png_path"]);
    out.push_back(std::move(e));
  }
  return out;
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw DataError("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

// ---- reward ---------------------------------------------------------------

struct RewardArgs {
  std::string svg, image, gt_svg;
};

int cmd_reward(const Common& c, const RewardArgs& a) {
  const AppConfig cfg = load(c);
  const RasterImage input = read_png(a.image);
  const SvgSource pred{read_text(a.svg)};
  std::optional<std::size_t> gt_length;
  if (!a.gt_svg.empty()) gt_length = token_length(lex_svg({read_text(a.gt_svg)}));
  SemanticClient client(cfg.semantic);
  RewardContext ctx;
  ctx.edges = cfg.edges;
  ctx.semantic = &client;
  RewardSpec spec = cfg.rewards;
  if (!gt_length && spec.contains(RewardKind::length)) {
    std::cerr << "note: no --gt-svg, dropping the length term\n";
    std::erase_if(spec.components, [](const RewardComponent& rc) { return rc.kind == RewardKind::length; });
  }
  const auto breakdown = reward_rollout(input, pred, gt_length, spec, cfg.render, ctx);
  std::cout << breakdown.to_json().dump(2) << '\n';
  return kOk;
}

// ---- sft ------------------------------------------------------------------

struct SftArgs {
  std::string out, resume;
  std::optional<int> steps;
};

int cmd_sft(const Common& c, const SftArgs& a) {
  AppConfig cfg = load(c);
  train::SftOptions opts = cfg.policy;
  if (a.steps) opts.steps = *a.steps;
  opts.seed = c.seed;
  opts.validate();
  policy::Checkpoint ck;
  if (!a.resume.empty()) {
    ck = policy::load_checkpoint(a.resume);
    if (ck.stage != "sft" && ck.stage != "init") throw ConfigError("cannot resume SFT from a '" + ck.stage + "' checkpoint");
  } else {
    ck.stage = "init";
  }
  const auto data = train::make_sft_examples(
      train::make_targets(opts.data_seed, static_cast<std::size_t>(opts.dataset_size), opts.canvas));
  JsonlLog log(c.log_path);
  train::run_sft(ck, data, opts, log.sink());
  ck.stage = "sft";
  ck.meta["sft"] = opts.to_json();
  ck.meta["seed"] = c.seed;
  policy::save_checkpoint(ck, a.out);
  std::cout << json{{"checkpoint", a.out}, {"step", ck.step}}.dump() << '\n';
  return kOk;
}

// ---- train-grpo -----------------------------------------------------------

struct GrpoArgs {
  std::string checkpoint, out;
  bool allow_cold_start = false;
  std::optional<int> steps;
  std::size_t targets = 20;
  std::uint64_t target_seed = 42;
  unsigned threads = 0;
};

int cmd_train_grpo(const Common& c, const GrpoArgs& a) {
  AppConfig cfg = load(c);
  policy::Checkpoint ck;
  if (!a.checkpoint.empty()) {
    ck = policy::load_checkpoint(a.checkpoint);
  } else if (!a.allow_cold_start) {
    std::cerr << "error: train-grpo needs an SFT checkpoint (--checkpoint); RL from an untrained policy "
                 "does not learn. Pass --allow-cold-start to run anyway.\n";
    return kConfig;
  } else {
    ck.stage = "init";
  }
  // A fresh RL stage restarts the schedule and the optimizer; a grpo checkpoint resumes.
  if (ck.stage != "grpo") {
    ck.step = 0;
    ck.optimizer = {};
  }
  const policy::FrozenPolicy reference(ck.params);
  const auto targets = train::make_targets(a.target_seed, a.targets, cfg.policy.canvas);
  SemanticClient client(cfg.semantic);
  train::GrpoRunOptions opts;
  opts.steps = a.steps.value_or(300);
  opts.canvas = cfg.policy.canvas;
  opts.seed = c.seed;
  opts.threads = a.threads;
  opts.reward_context.edges = cfg.edges;
  opts.reward_context.semantic = &client;
  JsonlLog log(c.log_path);
  train::run_grpo(ck, targets, cfg.rewards, cfg.grpo, opts, &reference, log.sink());
  ck.meta["grpo"] = cfg.grpo.to_json();
  ck.meta["rewards"] = json::parse(cfg.rewards.to_json().dump());
  ck.meta["seed"] = c.seed;
  policy::save_checkpoint(ck, a.out);
  std::cout << json{{"checkpoint", a.out}, {"step", ck.step}}.dump() << '\n';
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, manifest, out, dataset;
  int n = 5;
  double temperature = 0.5;
  double top_p = 0.9;
  std::size_t max_len = 64;
  std::size_t targets = 20;
  std::uint64_t target_seed = 1'000'000'000;
};

struct EvalItem {
  RasterImage image;
  SvgSource svg;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  AppConfig cfg = load(c);
  if (a.n < 1) throw ConfigError("--n must be at least 1");
  const auto ck = policy::load_checkpoint(a.checkpoint);

  std::vector<EvalItem> items;
  std::string dataset = a.dataset;
  if (!a.manifest.empty()) {
    RenderSpec rs;
    rs.ref_width = rs.ref_height = cfg.policy.canvas;
    for (const auto& e : read_manifest(a.manifest)) {
      SvgSource svg{read_text(e.svg_path)};
      RasterImage img = e.png_path ? read_png(*e.png_path) : render_svg(svg, rs);
      if (img.channels() == 1) img = replicate_channels(img);
      items.push_back({std::move(img), std::move(svg)});
    }
    if (dataset.empty()) dataset = fs::path(a.manifest).stem().string();
  } else {
    for (auto& t : train::make_targets(a.target_seed, a.targets, cfg.policy.canvas))
      items.push_back({std::move(t.image), std::move(t.svg)});
    if (dataset.empty()) dataset = "synthetic";
  }
  if (items.empty()) throw InsufficientRecords("nothing to evaluate");

  std::vector<double> mses(items.size()), ssims(items.size());
  std::vector<std::size_t> gt_len(items.size()), pred_len(items.size());
  train::parallel_for(items.size(), [&](std::size_t i) {
    const auto& item = items[i];
    const auto features = policy::featurize(item.image);
    RenderSpec rs;
    rs.ref_width = item.image.width();
    rs.ref_height = item.image.height();
    std::vector<RasterImage> renders;
    std::vector<SvgSource> texts;
    for (int k = 0; k < a.n; ++k) {
      policy::SampleConfig sc;
      sc.temperature = a.temperature;
      sc.top_p = a.top_p;
      sc.max_len = a.max_len;
      sc.seed = train::derive_seed(c.seed, 0xE7A1, i, static_cast<std::uint64_t>(k));
      texts.push_back(policy::decode_tokens(policy::sample_sequence(ck.params, features, sc).tokens.tokens));
      renders.push_back(render_svg(texts.back(), rs));
    }
    const std::size_t best = best_of_n(renders, item.image);
    mses[i] = mse(renders[best], item.image);
    ssims[i] = ssim(renders[best], item.image);
    gt_len[i] = token_length(lex_svg(item.svg));
    pred_len[i] = token_length(lex_svg(texts[best]));
  });
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  json table{{"dataset", dataset},
             {"mse", mean(mses)},
             {"ssim", mean(ssims)},
             {"code_efficiency", code_efficiency(gt_len, pred_len)},
             {"n", a.n},
             {"targets", items.size()}};
  if (!a.out.empty()) write_json_file(a.out, table);
  std::cout << table.dump(2) << '\n';
  return kOk;
}

// ---- curate ---------------------------------------------------------------

struct CurateArgs {
  std::string input, out, report;
  std::optional<std::size_t> sample;
  int clusters = 8;
};

int cmd_curate(const Common& c, const CurateArgs& a) {
  const AppConfig cfg = load(c);
  const auto entries = read_manifest(a.input);
  std::vector<curation::Record> records;
  records.reserve(entries.size());
  for (const auto& e : entries) {
    curation::Record r{e.id, {read_text(e.svg_path)}, std::nullopt};
    if (e.png_path) r.image = read_png(*e.png_path);
    records.push_back(std::move(r));
  }
  const auto result = curation::filter_dataset(records, cfg.curation);
  std::vector<std::size_t> keep(result.retained.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  if (a.sample) keep = curation::stratified_sample(result.images, *a.sample, a.clusters, c.seed);

  std::ofstream out(a.out);
  if (!out) throw DataError("cannot write " + a.out);
  for (std::size_t k : keep) out << entries[result.retained[k]].raw.dump() << '\n';

  json report = result.report.to_json();
  report["written"] = keep.size();
  report["criteria"] = cfg.curation.to_json();
  if (a.sample) report["clusters"] = a.clusters;
  if (!a.report.empty()) write_json_file(a.report, report);
  std::cout << report.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement learning from rendering feedback for SVG generation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Seed for all stochastic steps");
    sub->add_option("--ref-width", common.ref_width, "Reference render width");
    sub->add_option("--ref-height", common.ref_height, "Reference render height");
  };

  RewardArgs ra;
  auto* reward = app.add_subcommand("reward", "Score one SVG against a reference PNG");
  add_common(reward);
  reward->add_option("--svg", ra.svg, "Predicted SVG")->required();
  reward->add_option("--image", ra.image, "Reference PNG")->required();
  reward->add_option("--gt-svg", ra.gt_svg, "Ground-truth SVG for the length term");

  SftArgs sa;
  auto* sft = app.add_subcommand("sft", "Supervised stage on synthetic image/code pairs");
  add_common(sft);
  sft->add_option("--out", sa.out, "Checkpoint to write")->required();
  sft->add_option("--resume", sa.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  sft->add_option("--steps", sa.steps, "Total SFT steps");
  sft->add_option("--log", common.log_path, "JSONL log (appended)");

  GrpoArgs ga;
  auto* grpo_cmd = app.add_subcommand("train-grpo", "Reinforcement stage from an SFT checkpoint");
  add_common(grpo_cmd);
  grpo_cmd->add_option("--checkpoint", ga.checkpoint, "Starting checkpoint")->check(CLI::ExistingFile);
  grpo_cmd->add_option("--out", ga.out, "Checkpoint to write")->required();
  grpo_cmd->add_flag("--allow-cold-start", ga.allow_cold_start, "Start without an SFT checkpoint");
  grpo_cmd->add_option("--steps", ga.steps, "Total GRPO steps");
  grpo_cmd->add_option("--targets", ga.targets, "Number of synthetic training targets");
  grpo_cmd->add_option("--target-seed", ga.target_seed, "First seed of the training targets");
  grpo_cmd->add_option("--threads", ga.threads, "Worker threads (0 = all cores)");
  grpo_cmd->add_option("--log", common.log_path, "JSONL log (appended)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Best-of-n evaluation of a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", ea.manifest, "JSONL manifest {id, svg_path, png_path?}");
  eval->add_option("--dataset", ea.dataset, "Dataset name in the output");
  eval->add_option("--n", ea.n, "Candidates per target");
  eval->add_option("--temperature", ea.temperature, "Sampling temperature");
  eval->add_option("--top-p", ea.top_p, "Nucleus mass");
  eval->add_option("--max-len", ea.max_len, "Token cap per sample");
  eval->add_option("--targets", ea.targets, "Synthetic targets when no manifest is given");
  eval->add_option("--target-seed", ea.target_seed, "First seed of the synthetic targets");
  eval->add_option("--out", ea.out, "Also write the JSON table here");

  CurateArgs ca;
  auto* curate = app.add_subcommand("curate", "Filter (and optionally subsample) an SVG manifest");
  add_common(curate);
  curate->add_option("--input", ca.input, "Input JSONL manifest")->required();
  curate->add_option("--out", ca.out, "Output JSONL manifest")->required();
  curate->add_option("--report", ca.report, "Report JSON path");
  curate->add_option("--sample", ca.sample, "Keep this many records by cluster-stratified sampling");
  curate->add_option("--clusters", ca.clusters, "k-means clusters for --sample");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (reward->parsed()) return cmd_reward(common, ra);
    if (sft->parsed()) return cmd_sft(common, sa);
    if (grpo_cmd->parsed()) return cmd_train_grpo(common, ga);
    if (eval->parsed()) return cmd_eval(common, ea);
    if (curate->parsed()) return cmd_curate(common, ca);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
