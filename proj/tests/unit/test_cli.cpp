#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "rlrf/raster.hpp"
#include "rlrf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("rlrf_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path file(const std::string& name) { return workdir() / name; }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const char* bin = std::getenv("RLRF_CLI");
  REQUIRE_MESSAGE(bin, "RLRF_CLI must point at the rlrf binary");
  const auto out = file("stdout.txt");
  const std::string cmd = std::string(bin) + " " + args + " > " + out.string() + " 2> " + file("stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> rows;
  std::ifstream f(p);
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

const char* kSquare =
    R"(<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 32 32"><rect x="8" y="8" width="16" height="16" fill="#1f77b4"/></svg>)";

// A config that keeps runs short and avoids the semantic backend.
fs::path small_config() {
  const auto p = file("small.json");
  write(p, R"({
    "rewards": {"l2": 1.0, "length": 0.1},
    "grpo": {"group_size": 4, "conditions_per_step": 2, "lr0": 0.01},
    "policy": {"sft_steps": 30, "batch_size": 8, "dataset_size": 40},
    "curation": {"min_tokens": 20}
  })");
  return p;
}

fs::path sft_checkpoint() {
  static const fs::path ck = [] {
    const auto p = file("sft.ckpt");
    const auto r = cli("sft --config " + small_config().string() + " --seed 1 --out " + p.string());
    REQUIRE(r.code == 0);
    return p;
  }();
  return ck;
}

}  // namespace

TEST_CASE("reward subcommand") {
  write(file("square.svg"), kSquare);
  rlrf::RenderSpec rs;
  rs.ref_width = rs.ref_height = 64;
  rlrf::write_png(rlrf::render_svg({kSquare}, rs), file("square.png"));
  write(file("l2.json"), R"({"rewards": {"l2": 1.0}})");

  auto ok = cli("reward --config " + file("l2.json").string() + " --svg " + file("square.svg").string() +
                " --image " + file("square.png").string() + " --ref-width 64 --ref-height 64");
  REQUIRE(ok.code == 0);
  CHECK(json::parse(ok.out)["total"].get<double>() == doctest::Approx(1.0));

  write(file("broken.svg"), "<svg><rect");
  auto broken = cli("reward --config " + small_config().string() + " --svg " + file("broken.svg").string() +
                    " --gt-svg " + file("square.svg").string() + " --image " + file("square.png").string());
  REQUIRE(broken.code == 0);
  auto j = json::parse(broken.out);
  CHECK(j["render_failed"] == true);
  CHECK(j["components"]["l2"].get<double>() == -1.0);
  CHECK(j["components"].contains("length"));

  CHECK(cli("reward --svg " + file("missing.svg").string() + " --image " + file("square.png").string()).code == 3);
  CHECK(cli("reward --svg " + file("square.svg").string() + " --image " + file("square.svg").string()).code == 3);
  CHECK(cli("reward --svg " + file("square.svg").string() + " --image " + file("square.png").string() +
            " --ref-width 0").code == 2);
}

TEST_CASE("config and usage errors exit with 2") {
  write(file("bad.json"), R"({"grpo": {"group_size": 1}})");
  CHECK(cli("sft --config " + file("bad.json").string() + " --out " + file("x.ckpt").string()).code == 2);
  write(file("unknown.json"), R"({"schedule": {}})");
  CHECK(cli("sft --config " + file("unknown.json").string() + " --out " + file("x.ckpt").string()).code == 2);
  CHECK(cli("sft").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("sft logs are reproducible and resumable") {
  const auto cfg = small_config().string();
  auto run = [&](const std::string& name, const std::string& extra) {
    const auto log = file(name + ".jsonl");
    fs::remove(log);
    auto r = cli("sft --config " + cfg + " --seed 3 --out " + file(name + ".ckpt").string() + " --log " +
                 log.string() + " " + extra);
    REQUIRE(r.code == 0);
    return read_jsonl(log);
  };
  const auto a = run("a", "");
  const auto b = run("b", "");
  REQUIRE(a.size() == 30);
  CHECK(a == b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]["schema"] == rlrf::train::kSftLogSchema);
    CHECK(a[i]["step"] == i);
    for (const char* key : {"nll", "lr", "grad_norm"}) CHECK(a[i].contains(key));
  }
  double tail = 0;
  for (std::size_t i = a.size() - 5; i < a.size(); ++i) tail += a[i]["nll"].get<double>() / 5;
  CHECK(tail < a.front()["nll"].get<double>());

  // Stop at 12, resume to 30: same log lines as the uninterrupted run.
  run("c", "--steps 12");
  const auto log = file("c.jsonl");
  auto r = cli("sft --config " + cfg + " --seed 3 --resume " + file("c.ckpt").string() + " --out " +
               file("d.ckpt").string() + " --log " + log.string());
  REQUIRE(r.code == 0);
  CHECK(read_jsonl(log) == a);
}

TEST_CASE("train-grpo requires a checkpoint unless cold start is allowed") {
  const auto cfg = small_config().string();
  CHECK(cli("train-grpo --config " + cfg + " --out " + file("g.ckpt").string()).code == 2);
  CHECK(cli("train-grpo --config " + cfg + " --out " + file("g.ckpt").string() +
            " --allow-cold-start --steps 1 --targets 2").code == 0);

  const auto log = file("grpo.jsonl");
  fs::remove(log);
  auto r = cli("train-grpo --config " + cfg + " --seed 5 --checkpoint " + sft_checkpoint().string() + " --out " +
               file("g.ckpt").string() + " --steps 3 --targets 4 --log " + log.string());
  REQUIRE(r.code == 0);
  const auto rows = read_jsonl(log);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row["schema"] == rlrf::train::kGrpoLogSchema);
    for (const char* key : {"mean_reward", "reward_std", "mean_kl", "mean_seq_length", "surrogate", "grad_norm", "lr",
                            "length_weight", "max_len", "max_rollout_length", "mean_gt_length"})
      CHECK_MESSAGE(row.contains(key), key);
    CHECK(row["mean_kl"] == 0.0);
    CHECK(row["max_rollout_length"].get<int>() <= row["max_len"].get<int>());
  }
}

TEST_CASE("eval emits the metrics table") {
  const auto ck = sft_checkpoint().string();
  auto a = cli("eval --checkpoint " + ck + " --targets 4 --n 1 --seed 2");
  REQUIRE(a.code == 0);
  auto j = json::parse(a.out);
  for (const char* key : {"mse", "ssim", "code_efficiency", "n"}) CHECK(j.contains(key));
  CHECK(j["n"] == 1);
  CHECK(j["targets"] == 4);
  CHECK(json::parse(cli("eval --checkpoint " + ck + " --targets 4 --n 1 --seed 2").out) == j);

  // Best of five on the same seeds never does worse on average than its first draw here.
  auto five = json::parse(cli("eval --checkpoint " + ck + " --targets 4 --n 5 --seed 2").out);
  CHECK(five["mse"].get<double>() <= j["mse"].get<double>() + 1e-12);

  write(file("eval.jsonl"), std::string(R"({"id": "sq", "svg_path": "square.svg"})") + "\n");
  write(file("square.svg"), kSquare);
  auto m = cli("eval --checkpoint " + ck + " --manifest " + file("eval.jsonl").string() + " --n 2");
  REQUIRE(m.code == 0);
  CHECK(json::parse(m.out)["dataset"] == "eval");
  CHECK(cli("eval --checkpoint " + ck + " --manifest " + file("nope.jsonl").string()).code == 3);
}

TEST_CASE("curate filters a manifest") {
  write(file("good.svg"), R"(<svg viewBox="0 0 32 32"><rect width="16" height="32" fill="#d62728"/>)"
                          R"(<rect x="16" width="16" height="16" fill="#2ca02c"/></svg>)");
  write(file("blank.svg"), R"(<svg viewBox="0 0 8 8"><rect width="8" height="8" fill="#ffffff"/></svg>)");
  write(file("bad.svg"), "<svg><circle");
  write(file("in.jsonl"), std::string(R"({"id": "good", "svg_path": "good.svg", "extra": 7})") + "\n" +
                              R"({"id": "blank", "svg_path": "blank.svg"})" + "\n" +
                              R"({"id": "bad", "svg_path": "bad.svg"})" + "\n");
  auto r = cli("curate --config " + small_config().string() + " --input " + file("in.jsonl").string() + " --out " +
               file("out.jsonl").string() + " --report " + file("report.json").string());
  REQUIRE(r.code == 0);
  const auto kept = read_jsonl(file("out.jsonl"));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0]["id"] == "good");
  CHECK(kept[0]["extra"] == 7);
  const auto report = json::parse(slurp(file("report.json")));
  CHECK(report["input"] == 3);
  CHECK(report["broken"] == 1);
  CHECK(report["blank"] == 1);
  CHECK(report["retained"] == 1);

  CHECK(cli("curate --config " + small_config().string() + " --input " + file("in.jsonl").string() + " --out " +
            file("out2.jsonl").string() + " --sample 5").code == 3);
  write(file("garbage.jsonl"), "{not json}\n");
  CHECK(cli("curate --input " + file("garbage.jsonl").string() + " --out " + file("o.jsonl").string()).code == 3);
}
