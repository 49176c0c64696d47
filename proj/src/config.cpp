#include "rlrf/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "rlrf/error.hpp"

namespace rlrf {

void AppConfig::validate() const {
  render.validate();
  edges.validate();
  rewards.validate();
  grpo.validate();
  policy.validate();
  curation.validate();
  semantic.validate();
}

nlohmann::ordered_json AppConfig::to_json() const {
  nlohmann::ordered_json j;
  j["render"] = {{"ref_width", render.ref_width},
                 {"ref_height", render.ref_height},
                 {"canny_low", edges.canny_low},
                 {"canny_high", edges.canny_high},
                 {"dilate_kernel", edges.dilate_kernel},
                 {"dilate_iterations", edges.dilate_iterations},
                 {"blur_size", edges.blur_size},
                 {"blur_sigma", edges.blur_sigma}};
  j["rewards"] = rewards.to_json();
  j["grpo"] = nlohmann::ordered_json::parse(grpo.to_json().dump());
  j["policy"] = nlohmann::ordered_json::parse(policy.to_json().dump());
  j["curation"] = nlohmann::ordered_json::parse(curation.to_json().dump());
  j["semantic"] = {{"mode", semantic.mode == SemanticBackend::Mode::remote ? "remote" : "local_proxy"},
                   {"endpoint", semantic.endpoint},
                   {"timeout_ms", semantic.timeout_ms},
                   {"retries", semantic.retries}};
  return j;
}

namespace {

template <typename T>
void read(const nlohmann::ordered_json& section, const char* name, const char* key, T& field) {
  if (!section.contains(key)) return;
  try {
    field = section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(name) + "." + key + " has the wrong type");
  }
}

void only_keys(const nlohmann::ordered_json& section, const char* name, std::initializer_list<const char*> keys) {
  for (const auto& [key, _] : section.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end())
      throw ConfigError(std::string("unknown key ") + name + "." + key);
  }
}

nlohmann::json plain(const nlohmann::ordered_json& j) { return nlohmann::json::parse(j.dump()); }

}  // namespace

AppConfig config_from_json(const nlohmann::ordered_json& j, AppConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "render" && key != "rewards" && key != "grpo" && key != "policy" && key != "curation" &&
        key != "semantic") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  if (j.contains("render")) {
    const auto& r = j["render"];
    if (!r.is_object()) throw ConfigError("render section must be an object");
    only_keys(r, "render", {"ref_width", "ref_height", "canny_low", "canny_high", "dilate_kernel",
                            "dilate_iterations", "blur_size", "blur_sigma"});
    read(r, "render", "ref_width", c.render.ref_width);
    read(r, "render", "ref_height", c.render.ref_height);
    read(r, "render", "canny_low", c.edges.canny_low);
    read(r, "render", "canny_high", c.edges.canny_high);
    read(r, "render", "dilate_kernel", c.edges.dilate_kernel);
    read(r, "render", "dilate_iterations", c.edges.dilate_iterations);
    read(r, "render", "blur_size", c.edges.blur_size);
    read(r, "render", "blur_sigma", c.edges.blur_sigma);
  }
  if (j.contains("rewards")) c.rewards = RewardSpec::from_json(j["rewards"]);
  if (j.contains("grpo")) c.grpo = grpo::TrainConfig::from_json(plain(j["grpo"]), c.grpo);
  if (j.contains("policy")) c.policy = train::SftOptions::from_json(plain(j["policy"]), c.policy);
  if (j.contains("curation")) c.curation = curation::Criteria::from_json(plain(j["curation"]), c.curation);
  if (j.contains("semantic")) {
    const auto& s = j["semantic"];
    if (!s.is_object()) throw ConfigError("semantic section must be an object");
    only_keys(s, "semantic", {"mode", "endpoint", "timeout_ms", "retries"});
    std::string mode = c.semantic.mode == SemanticBackend::Mode::remote ? "remote" : "local_proxy";
    read(s, "semantic", "mode", mode);
    if (mode == "remote") {
      c.semantic.mode = SemanticBackend::Mode::remote;
    } else if (mode == "local_proxy") {
      c.semantic.mode = SemanticBackend::Mode::local_proxy;
    } else {
      throw ConfigError("semantic.mode must be 'remote' or 'local_proxy'");
    }
    read(s, "semantic", "endpoint", c.semantic.endpoint);
    read(s, "semantic", "timeout_ms", c.semantic.timeout_ms);
    read(s, "semantic", "retries", c.semantic.retries);
  }
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

}  // namespace rlrf
