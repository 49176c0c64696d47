#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rlrf/config.hpp"
#include "rlrf/error.hpp"

using namespace rlrf;
using nlohmann::ordered_json;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  auto p = std::filesystem::temp_directory_path() / ("rlrf_config_" + name + ".json");
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("empty config keeps defaults") {
  unsetenv("RLRF_SEMANTIC_ENDPOINT");
  AppConfig c = config_from_json(ordered_json::object());
  CHECK(c.render.ref_width == 512);
  CHECK(c.grpo.group_size == 16);
  CHECK(c.grpo.clip_eps == 0.4);
  CHECK(c.grpo.kl_beta == 0.0);
  CHECK(c.curation.min_tokens == 500);
  CHECK(c.rewards.to_json() == RewardSpec::defaults().to_json());
  CHECK(c.semantic.mode == SemanticBackend::Mode::local_proxy);
}

TEST_CASE("sections override fields") {
  auto j = ordered_json::parse(R"({
    "render": {"ref_width": 64, "ref_height": 48, "blur_size": 5},
    "rewards": {"l2": 1.0, "length": 0.2, "length_floor": true},
    "grpo": {"group_size": 4, "kl_beta": 0.04, "ratio_mode": "per_token"},
    "policy": {"sft_steps": 10},
    "curation": {"min_tokens": 20},
    "semantic": {"mode": "remote", "endpoint": "http://127.0.0.1:1", "retries": 0}
  })");
  AppConfig c = config_from_json(j);
  CHECK(c.render.ref_width == 64);
  CHECK(c.render.ref_height == 48);
  CHECK(c.edges.blur_size == 5);
  CHECK(c.rewards.length_floor);
  CHECK(c.rewards.components.size() == 2);
  CHECK(c.grpo.group_size == 4);
  CHECK(c.grpo.ratio_mode == grpo::RatioMode::per_token);
  CHECK(c.grpo.conditions_per_step == 8);
  CHECK(c.policy.steps == 10);
  CHECK(c.curation.min_tokens == 20);
  CHECK(c.semantic.mode == SemanticBackend::Mode::remote);
  CHECK(c.semantic.retries == 0);

  // Serialized form reads back to the same configuration.
  CHECK(config_from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("malformed configs are rejected") {
  auto bad = [](const char* text) { return config_from_json(ordered_json::parse(text)); };
  CHECK_THROWS_AS(bad(R"([])"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"optimizer": {}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"render": {"ref_widht": 10}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"render": {"ref_width": "big"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"render": {"ref_width": 0}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"render": {"blur_size": 4}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"grpo": {"group_size": 1}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"grpo": {"clip": 0.2}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"rewards": {"pixels": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"semantic": {"mode": "cloud"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"semantic": {"mode": "remote"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"semantic": {"port": 1}})"), ConfigError);
}

TEST_CASE("load from disk") {
  auto good = write_temp("good", R"({"grpo": {"group_size": 8}})");
  CHECK(load_config(good).grpo.group_size == 8);
  auto broken = write_temp("broken", "{ not json");
  CHECK_THROWS_AS(load_config(broken), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/rlrf.json"), ConfigError);
  std::filesystem::remove(good);
  std::filesystem::remove(broken);
}
