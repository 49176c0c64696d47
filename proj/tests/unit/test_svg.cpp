#include <random>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "rlrf/svg.hpp"

using namespace rlrf;

namespace {

SanitizeOptions strip() {
  SanitizeOptions o;
  o.strip_text = true;
  return o;
}

std::string random_markup(std::mt19937_64& rng) {
  static const std::string payload(80, 'A');
  static const char* pieces[] = {"<svg", ">", "</svg>", "<rect x=\"1.23456\" y=\"-0.5\"/>", "<text>", "</text>",
                                 "hello", "<?xml version=\"1.0\"?>", "<!DOCTYPE svg>", " ", "\n\t",
                                 "<path d=\"M1.005 2L3.14159,4e2\"/>", "\"", "=", "<", "/>", "3.999",
                                 "<image href=\"data:image/png;base64,", payload.c_str(), "\"/>",
                                 "<g>", "</g>", "&amp;", "<!-- c -->"};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(pieces) - 1);
  std::uniform_int_distribution<int> count(0, 25);
  std::string s;
  for (int i = count(rng); i > 0; --i) s += pieces[pick(rng)];
  return s;
}

}  // namespace

TEST_CASE("xml declaration is removed and counted") {
  auto [out, report] = sanitize_svg({"<?xml version=\"1.0\"?><svg/>"});
  CHECK(out.text == "<svg/>");
  CHECK(report.removed_headers == 1);
}

TEST_CASE("text elements are stripped only on request") {
  SvgSource src{"<svg><text>hi</text><rect/></svg>"};
  auto [stripped, r1] = sanitize_svg(src, strip());
  CHECK(stripped.text == "<svg><rect/></svg>");
  CHECK(r1.removed_text_elements == 1);
  auto [kept, r2] = sanitize_svg(src);
  CHECK(kept.text.find("<text>") != std::string::npos);
  CHECK(r2.removed_text_elements == 0);
}

TEST_CASE("nested and attributed text elements are stripped") {
  auto [out, r] = sanitize_svg({"<svg><text x=\"1\">a<tspan>b</tspan></text><text/><circle r=\"2\"/></svg>"}, strip());
  CHECK(out.text == "<svg><circle r=\"2\"/></svg>");
  CHECK(r.removed_text_elements == 2);
}

TEST_CASE("long data payloads are removed with their attribute") {
  std::string payload = "data:image/png;base64," + std::string(100, 'Q');
  auto [out, r] = sanitize_svg({"<svg><image href=\"" + payload + "\" width=\"4\"/></svg>"});
  CHECK(out.text.find("data:") == std::string::npos);
  CHECK(out.text.find("width=\"4\"") != std::string::npos);
  CHECK(r.removed_base64_payloads == 1);

  auto [short_out, r2] = sanitize_svg({"<svg><image href=\"data:x\"/></svg>"});
  CHECK(short_out.text.find("data:x") != std::string::npos);
  CHECK(r2.removed_base64_payloads == 0);
}

TEST_CASE("numbers in attributes are rounded to two decimals") {
  auto [out, r] = sanitize_svg({"<path d=\"M1.23456 2.5L3.999,4\"/>"});
  CHECK(out.text == "<path d=\"M1.23 2.5L4,4\"/>");
  CHECK(r.decimals_rounded == 2);
}

TEST_CASE("sanitize is idempotent on fuzzed markup") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    SvgSource s{"<?xml version=\"1.0\"?>" + random_markup(rng)};
    for (bool text : {false, true}) {
      SanitizeOptions o;
      o.strip_text = text;
      auto once = sanitize_svg(s, o).first;
      auto twice = sanitize_svg(once, o);
      REQUIRE_MESSAGE(twice.first == once, s.text);
      CHECK(twice.second == SanitizeReport{});
      CHECK_FALSE(once.text.starts_with("<?xml"));
    }
  }
}

TEST_CASE("sanitize report serializes") {
  nlohmann::json j = SanitizeReport{1, 2, 3, 4};
  CHECK(j["removed_headers"] == 1);
  CHECK(j["removed_text_elements"] == 2);
  CHECK(j["removed_base64_payloads"] == 3);
  CHECK(j["decimals_rounded"] == 4);
}

TEST_CASE("lexer basics") {
  CHECK(lex_svg({""}).size() == 0);
  auto seq = lex_svg({"<rect x=\"1\" y=\"2\"/>"});
  CHECK(seq.vocab_id == kSvgLexVocab);
  // Golden count: < rect x = " 1 " y = " 2 " />
  CHECK(seq.size() == 13);
  for (auto id : seq.tokens) {
    CHECK(id >= 0);
    CHECK(id < kSvgLexVocabSize);
  }
}

TEST_CASE("lexer is pure across runs and threads") {
  std::mt19937_64 rng(5);
  std::vector<SvgSource> inputs;
  for (int i = 0; i < 200; ++i) inputs.push_back({random_markup(rng)});
  std::vector<TokenSequence> a(inputs.size()), b(inputs.size());
  std::thread t([&] {
    for (std::size_t i = 0; i < inputs.size(); ++i) b[i] = lex_svg(inputs[i]);
  });
  for (std::size_t i = 0; i < inputs.size(); ++i) a[i] = lex_svg(inputs[i]);
  t.join();
  for (std::size_t i = 0; i < inputs.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("token_length and concatenation") {
  TokenSequence empty{{}, "v"};
  CHECK(token_length(empty) == 0);
  TokenSequence seven{{1, 2, 3, 4, 5, 6, 7}, "v"};
  CHECK(token_length(seven) == 7);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto x = lex_svg({random_markup(rng)});
    auto y = lex_svg({random_markup(rng)});
    CHECK(token_length(concat(x, y)) == token_length(x) + token_length(y));
  }
  CHECK_THROWS_AS(concat(seven, TokenSequence{{1}, "other"}), std::invalid_argument);
}
