#include "rlrf/semantic.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>

#include "rlrf/error.hpp"

namespace rlrf {

std::string to_string(SemanticMetric m) {
  switch (m) {
    case SemanticMetric::dreamsim: return "dreamsim";
    case SemanticMetric::dreamsim_canny: return "dreamsim_canny";
    case SemanticMetric::clip_text: return "clip_text";
    case SemanticMetric::judge_easy: return "judge_easy";
    case SemanticMetric::judge_hard: return "judge_hard";
  }
  return "unknown";
}

SemanticMetric parse_semantic_metric(const std::string& name) {
  for (auto m : {SemanticMetric::dreamsim, SemanticMetric::dreamsim_canny, SemanticMetric::clip_text,
                 SemanticMetric::judge_easy, SemanticMetric::judge_hard}) {
    if (to_string(m) == name) return m;
  }
  throw ProtocolError("unknown metric '" + name + "'");
}

bool is_image_pair_metric(SemanticMetric m) {
  return m == SemanticMetric::dreamsim || m == SemanticMetric::dreamsim_canny;
}

std::pair<double, double> score_range(SemanticMetric m) {
  switch (m) {
    case SemanticMetric::dreamsim:
    case SemanticMetric::dreamsim_canny: return {0.0, 2.0};
    case SemanticMetric::clip_text: return {-1.0, 1.0};
    case SemanticMetric::judge_easy:
    case SemanticMetric::judge_hard: return {0.0, 1.0};
  }
  return {0.0, 0.0};
}

void SemanticBackend::validate() const {
  if (timeout_ms <= 0) throw ConfigError("SemanticBackend: timeout must be > 0");
  if (retries < 0) throw ConfigError("SemanticBackend: retries must be >= 0");
  if (mode == Mode::remote && endpoint.empty()) throw ConfigError("SemanticBackend: remote mode needs an endpoint");
}

SemanticBackend SemanticBackend::from_environment() {
  SemanticBackend b;
  if (const char* url = std::getenv("RLRF_SEMANTIC_ENDPOINT"); url && *url) {
    b.mode = Mode::remote;
    b.endpoint = url;
  }
  return b;
}

namespace {

std::string image_to_wire(const RasterImage& img) { return base64_encode(encode_png(img)); }

RasterImage image_from_wire(const nlohmann::json& j) {
  if (!j.is_string()) throw ProtocolError("image payload must be a base64 string");
  return decode_png(base64_decode(j.get<std::string>()));
}

}  // namespace

nlohmann::json ScoreRequest::to_json() const {
  nlohmann::json j{{"metric", to_string(metric)}};
  if (image_a) j["image_a"] = image_to_wire(*image_a);
  if (image_b) j["image_b"] = image_to_wire(*image_b);
  if (prompt) j["prompt"] = *prompt;
  return j;
}

ScoreRequest ScoreRequest::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("metric") || !j["metric"].is_string()) {
    throw ProtocolError("score request needs a string 'metric'");
  }
  ScoreRequest r;
  r.metric = parse_semantic_metric(j["metric"].get<std::string>());
  if (j.contains("image_a")) r.image_a = image_from_wire(j["image_a"]);
  if (j.contains("image_b")) r.image_b = image_from_wire(j["image_b"]);
  if (j.contains("prompt")) {
    if (!j["prompt"].is_string()) throw ProtocolError("prompt must be a string");
    r.prompt = j["prompt"].get<std::string>();
  }
  if (is_image_pair_metric(r.metric) && (!r.image_a || !r.image_b)) {
    throw ProtocolError(to_string(r.metric) + " needs image_a and image_b");
  }
  if (!is_image_pair_metric(r.metric) && (!r.image_a || !r.prompt)) {
    throw ProtocolError(to_string(r.metric) + " needs image_a and prompt");
  }
  return r;
}

nlohmann::json ScoreResponse::to_json() const { return {{"score", score}, {"model_id", model_id}}; }

ScoreResponse ScoreResponse::from_json(const nlohmann::json& j, SemanticMetric metric) {
  if (!j.is_object() || !j.contains("score") || !j["score"].is_number()) {
    throw ProtocolError("score response needs a numeric 'score'");
  }
  ScoreResponse r;
  r.score = j["score"].get<double>();
  if (j.contains("model_id") && j["model_id"].is_string()) r.model_id = j["model_id"].get<std::string>();
  auto [lo, hi] = score_range(metric);
  if (!std::isfinite(r.score) || r.score < lo || r.score > hi) {
    throw ProtocolError(to_string(metric) + " score " + std::to_string(r.score) + " outside [" + std::to_string(lo) +
                        ", " + std::to_string(hi) + "]");
  }
  return r;
}

double local_proxy_similarity(const RasterImage& a, const RasterImage& b) {
  auto features = [](const RasterImage& img) {
    RasterImage small = resize_area(to_grayscale(img), 16, 16);
    std::vector<double> v(small.data().begin(), small.data().end());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
    return v;
  };
  auto fa = features(a), fb = features(b);
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    dot += fa[i] * fb[i];
    na += fa[i] * fa[i];
    nb += fb[i] * fb[i];
  }
  constexpr double tiny = 1e-24;
  double cos;
  if (na < tiny && nb < tiny) {
    cos = 1.0;  // two flat images are identical in this feature space
  } else if (na < tiny || nb < tiny) {
    cos = 0.0;
  } else {
    cos = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
  }
  return 1.0 - cos;
}

SemanticClient::SemanticClient(SemanticBackend backend) : backend_(std::move(backend)) { backend_.validate(); }

ScoreResponse SemanticClient::post_score(const ScoreRequest& request) const {
  const std::string body = request.to_json().dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= backend_.retries; ++attempt) {
    httplib::Client client(backend_.endpoint);
    if (!client.is_valid()) throw BackendUnavailable("invalid endpoint '" + backend_.endpoint + "'");
    const auto timeout = std::chrono::milliseconds(backend_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post("/score", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProtocolError("score request rejected with HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw ProtocolError("score response is not JSON");
    return ScoreResponse::from_json(j, request.metric);
  }
  throw BackendUnavailable("semantic service at " + backend_.endpoint + " unavailable after " +
                           std::to_string(backend_.retries + 1) + " attempts: " + last_error);
}

double SemanticClient::score_pair(const RasterImage& a, const RasterImage& b, SemanticMetric metric) const {
  if (!is_image_pair_metric(metric)) throw ProtocolError(to_string(metric) + " is not an image-pair metric");
  if (backend_.mode == SemanticBackend::Mode::local_proxy) return local_proxy_similarity(a, b);
  ScoreRequest req;
  req.metric = metric;
  req.image_a = a;
  req.image_b = b;
  return post_score(req).score;
}

double SemanticClient::score_text_image(const std::string& prompt, const RasterImage& img, SemanticMetric metric) const {
  if (is_image_pair_metric(metric)) throw ProtocolError(to_string(metric) + " is not a text-image metric");
  if (backend_.mode == SemanticBackend::Mode::local_proxy) {
    throw UnsupportedLocally(to_string(metric) + " needs the remote semantic service");
  }
  ScoreRequest req;
  req.metric = metric;
  req.image_a = img;
  req.prompt = prompt;
  return post_score(req).score;
}

HealthStatus SemanticClient::health_check() const noexcept {
  HealthStatus status;
  if (backend_.mode == SemanticBackend::Mode::local_proxy) {
    status.ok = true;
    status.model_id = kLocalProxyModelId;
    return status;
  }
  try {
    httplib::Client client(backend_.endpoint);
    if (!client.is_valid()) {
      status.detail = "invalid endpoint";
      return status;
    }
    const auto timeout = std::chrono::milliseconds(backend_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    auto res = client.Get("/health");
    if (!res) {
      status.detail = httplib::to_string(res.error());
      return status;
    }
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status != 200 || j.is_discarded() || !j.is_object()) {
      status.detail = "HTTP " + std::to_string(res->status);
      return status;
    }
    status.model_id = j.value("model_id", "");
    status.ok = j.value("status", "") == "ok";
    if (!status.ok) status.detail = j.value("status", "unknown status");
  } catch (const std::exception& e) {
    status.ok = false;
    status.detail = e.what();
  }
  return status;
}

}  // namespace rlrf
