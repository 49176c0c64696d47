#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rlrf/image.hpp"

namespace rlrf {

enum class SemanticMetric { dreamsim, dreamsim_canny, clip_text, judge_easy, judge_hard };

std::string to_string(SemanticMetric m);
SemanticMetric parse_semantic_metric(const std::string& name);
bool is_image_pair_metric(SemanticMetric m);

struct SemanticBackend {
  enum class Mode { remote, local_proxy };

  Mode mode = Mode::local_proxy;
  std::string endpoint;  // e.g. "http://127.0.0.1:8765"; remote only
  int timeout_ms = 10000;
  int retries = 2;  // extra attempts after the first

  void validate() const;

  // Remote backend when RLRF_SEMANTIC_ENDPOINT is set, local proxy otherwise.
  static SemanticBackend from_environment();
};

// Wire types for POST /score.
struct ScoreRequest {
  SemanticMetric metric = SemanticMetric::dreamsim;
  std::optional<RasterImage> image_a;
  std::optional<RasterImage> image_b;
  std::optional<std::string> prompt;

  nlohmann::json to_json() const;
  static ScoreRequest from_json(const nlohmann::json& j);
};

struct ScoreResponse {
  double score = 0.0;
  std::string model_id;

  nlohmann::json to_json() const;
  // Validates the score against the metric's documented range.
  static ScoreResponse from_json(const nlohmann::json& j, SemanticMetric metric);
};

struct HealthStatus {
  bool ok = false;
  std::string model_id;
  std::string detail;
};

// Documented score range for a metric on the wire.
std::pair<double, double> score_range(SemanticMetric m);

inline constexpr const char* kLocalProxyModelId = "local-proxy-gray16-cosine";

// sim = 1 - cos of mean-centred 16x16 grayscale downsamples, in [0, 2].
double local_proxy_similarity(const RasterImage& a, const RasterImage& b);

// Client for the semantic scoring service. Safe for concurrent use; every
// request opens its own connection.
class SemanticClient {
 public:
  explicit SemanticClient(SemanticBackend backend = {});

  const SemanticBackend& backend() const noexcept { return backend_; }

  // DreamSim-style distance in [0, 2]; downstream reward is 1 - sim.
  // Throws BackendUnavailable, ProtocolError.
  double score_pair(const RasterImage& a, const RasterImage& b, SemanticMetric metric) const;

  // clip_text returns a cosine in [-1, 1]; judge modes return P(yes) in [0, 1].
  // Throws UnsupportedLocally under the local proxy.
  double score_text_image(const std::string& prompt, const RasterImage& img, SemanticMetric metric) const;

  HealthStatus health_check() const noexcept;

 private:
  ScoreResponse post_score(const ScoreRequest& request) const;

  SemanticBackend backend_;
};

}  // namespace rlrf
