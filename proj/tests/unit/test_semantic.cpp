#include <atomic>
#include <functional>
#include <random>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "rlrf/error.hpp"
#include "rlrf/semantic.hpp"

using namespace rlrf;

namespace {

// In-process stand-in for the scoring service.
class FakeService {
 public:
  using Handler = std::function<void(const nlohmann::json&, httplib::Response&)>;

  explicit FakeService(Handler score) : score_(std::move(score)) {
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++score_calls;
      score_(nlohmann::json::parse(req.body), res);
    });
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(health_body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  SemanticBackend backend(int retries = 2) const {
    SemanticBackend b;
    b.mode = SemanticBackend::Mode::remote;
    b.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    b.timeout_ms = 2000;
    b.retries = retries;
    return b;
  }

  std::atomic<int> score_calls{0};
  std::string health_body = R"({"status": "ok", "model_id": "fake-1"})";

 private:
  Handler score_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

void reply(httplib::Response& res, double score) {
  res.set_content(nlohmann::json{{"score", score}, {"model_id", "fake-1"}}.dump(), "application/json");
}

RasterImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RasterImage img(w, h, 3);
  for (auto& v : img.data()) v = std::round(u(rng) * 255) / 255;
  return img;
}

SemanticBackend unreachable(int retries) {
  // Reserve a port, then release it so nothing is listening there.
  httplib::Server probe;
  int port = probe.bind_to_any_port("127.0.0.1");
  probe.stop();
  SemanticBackend b;
  b.mode = SemanticBackend::Mode::remote;
  b.endpoint = "http://127.0.0.1:" + std::to_string(port);
  b.timeout_ms = 300;
  b.retries = retries;
  return b;
}

}  // namespace

TEST_CASE("local proxy") {
  SemanticClient client;
  std::mt19937_64 rng(1);
  auto a = random_image(rng, 24, 24), b = random_image(rng, 24, 24);
  CHECK(client.score_pair(a, a, SemanticMetric::dreamsim) == doctest::Approx(0.0).epsilon(1e-12));
  RasterImage inv = a;
  for (auto& v : inv.data()) v = 1.0 - v;
  CHECK(client.score_pair(a, inv, SemanticMetric::dreamsim) == doctest::Approx(2.0));
  CHECK(client.score_pair(a, b, SemanticMetric::dreamsim) == client.score_pair(b, a, SemanticMetric::dreamsim));
  CHECK(client.score_pair(a, b, SemanticMetric::dreamsim) == client.score_pair(a, b, SemanticMetric::dreamsim));
  CHECK_THROWS_AS(client.score_text_image("a cat", a, SemanticMetric::clip_text), UnsupportedLocally);
  CHECK_THROWS_AS(client.score_pair(a, b, SemanticMetric::judge_easy), ProtocolError);
  auto health = client.health_check();
  CHECK(health.ok);
  CHECK(health.model_id == kLocalProxyModelId);
}

TEST_CASE("wire format round trip") {
  std::mt19937_64 rng(2);
  ScoreRequest req;
  req.metric = SemanticMetric::dreamsim_canny;
  req.image_a = random_image(rng, 5, 4);
  req.image_b = random_image(rng, 5, 4);
  auto j = req.to_json();
  CHECK(j["metric"] == "dreamsim_canny");
  CHECK(j["image_a"].is_string());
  CHECK_FALSE(j.contains("prompt"));
  auto back = ScoreRequest::from_json(j);
  CHECK(back.metric == req.metric);
  CHECK(*back.image_a == *req.image_a);
  CHECK(*back.image_b == *req.image_b);
  CHECK_THROWS_AS(ScoreResponse::from_json({{"score", 1.5}, {"model_id", "m"}}, SemanticMetric::clip_text), ProtocolError);
  CHECK_THROWS_AS(ScoreResponse::from_json({{"score", -0.1}, {"model_id", "m"}}, SemanticMetric::judge_hard), ProtocolError);
  CHECK_THROWS_AS(ScoreResponse::from_json({{"model_id", "m"}}, SemanticMetric::dreamsim), ProtocolError);
  CHECK(ScoreResponse::from_json({{"score", 2.0}, {"model_id", "m"}}, SemanticMetric::dreamsim).score == 2.0);
}

TEST_CASE("remote scoring against a fake service") {
  std::mt19937_64 rng(3);
  auto a = random_image(rng, 8, 8), b = random_image(rng, 8, 8);
  // The fake computes the proxy on the decoded payloads, so a round trip must agree.
  FakeService svc([](const nlohmann::json& j, httplib::Response& res) {
    auto req = ScoreRequest::from_json(j);
    if (req.prompt) {
      reply(res, req.metric == SemanticMetric::clip_text ? 0.31 : 0.2);
    } else {
      reply(res, local_proxy_similarity(*req.image_a, *req.image_b));
    }
  });
  SemanticClient client(svc.backend());
  CHECK(client.score_pair(a, a, SemanticMetric::dreamsim) <= 0.01);
  CHECK(client.score_pair(a, b, SemanticMetric::dreamsim) == doctest::Approx(local_proxy_similarity(a, b)));
  CHECK(client.score_text_image("a cat", a, SemanticMetric::clip_text) == doctest::Approx(0.31));
  CHECK(client.score_text_image("a cat", RasterImage::filled(8, 8, {1, 1, 1}), SemanticMetric::judge_easy) <= 0.5);
  auto health = client.health_check();
  CHECK(health.ok);
  CHECK(health.model_id == "fake-1");

  svc.health_body = R"({"status": "loading", "model_id": "fake-1"})";
  CHECK_FALSE(client.health_check().ok);
}

TEST_CASE("out-of-range scores are protocol errors") {
  FakeService svc([](const nlohmann::json&, httplib::Response& res) { reply(res, 1.7); });
  SemanticClient client(svc.backend());
  RasterImage img(4, 4, 3, 0.5);
  CHECK_THROWS_AS(client.score_text_image("x", img, SemanticMetric::clip_text), ProtocolError);
  CHECK_THROWS_AS(client.score_text_image("x", img, SemanticMetric::judge_hard), ProtocolError);
  CHECK(client.score_pair(img, img, SemanticMetric::dreamsim) == 1.7);
}

TEST_CASE("server errors are retried, client errors are not") {
  RasterImage img(4, 4, 3, 0.5);
  {
    FakeService svc([](const nlohmann::json&, httplib::Response& res) { res.status = 503; });
    SemanticClient client(svc.backend(2));
    CHECK_THROWS_AS(client.score_pair(img, img, SemanticMetric::dreamsim), BackendUnavailable);
    CHECK(svc.score_calls == 3);
  }
  {
    std::atomic<int> n{0};
    FakeService svc([&](const nlohmann::json&, httplib::Response& res) {
      if (n++ == 0) {
        res.status = 500;
      } else {
        reply(res, 0.25);
      }
    });
    SemanticClient client(svc.backend(1));
    CHECK(client.score_pair(img, img, SemanticMetric::dreamsim) == 0.25);
    CHECK(svc.score_calls == 2);
  }
  {
    FakeService svc([](const nlohmann::json&, httplib::Response& res) {
      res.status = 400;
      res.set_content("bad metric", "text/plain");
    });
    SemanticClient client(svc.backend(3));
    CHECK_THROWS_AS(client.score_pair(img, img, SemanticMetric::dreamsim), ProtocolError);
    CHECK(svc.score_calls == 1);
  }
  {
    FakeService svc([](const nlohmann::json&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
    SemanticClient client(svc.backend());
    CHECK_THROWS_AS(client.score_pair(img, img, SemanticMetric::dreamsim), ProtocolError);
  }
}

TEST_CASE("unreachable endpoint") {
  SemanticClient client(unreachable(2));
  RasterImage img(4, 4, 3, 0.5);
  CHECK_THROWS_AS(client.score_pair(img, img, SemanticMetric::dreamsim), BackendUnavailable);
  CHECK_THROWS_AS(client.score_text_image("x", img, SemanticMetric::judge_easy), BackendUnavailable);
  auto health = client.health_check();
  CHECK_FALSE(health.ok);
  CHECK_FALSE(health.detail.empty());

  SemanticBackend bad;
  bad.mode = SemanticBackend::Mode::remote;
  bad.endpoint = "not a url";
  CHECK_FALSE(SemanticClient(bad).health_check().ok);
}

TEST_CASE("backend validation") {
  SemanticBackend b;
  b.timeout_ms = 0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = {};
  b.retries = -1;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = {};
  b.mode = SemanticBackend::Mode::remote;
  CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("concurrent remote requests") {
  FakeService svc([](const nlohmann::json& j, httplib::Response& res) {
    auto req = ScoreRequest::from_json(j);
    reply(res, local_proxy_similarity(*req.image_a, *req.image_b));
  });
  SemanticClient client(svc.backend());
  std::mt19937_64 rng(5);
  std::vector<RasterImage> imgs;
  for (int i = 0; i < 8; ++i) imgs.push_back(random_image(rng, 8, 8));
  std::vector<double> got(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] { got[i] = client.score_pair(imgs[i], imgs[(i + 1) % 8], SemanticMetric::dreamsim); });
  for (auto& t : threads) t.join();
  for (int i = 0; i < 8; ++i) CHECK(got[i] == doctest::Approx(local_proxy_similarity(imgs[i], imgs[(i + 1) % 8])));
}
