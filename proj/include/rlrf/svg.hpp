#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace rlrf {

struct SvgSource {
  std::string text;

  friend bool operator==(const SvgSource&, const SvgSource&) = default;
};

// Ordered token ids tagged with the vocabulary that produced them.
struct TokenSequence {
  std::vector<std::int32_t> tokens;
  std::string vocab_id;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

std::size_t token_length(const TokenSequence& seq) noexcept;

// Throws std::invalid_argument when the vocabularies differ.
TokenSequence concat(const TokenSequence& a, const TokenSequence& b);

struct SanitizeReport {
  int removed_headers = 0;
  int removed_text_elements = 0;
  int removed_base64_payloads = 0;
  int decimals_rounded = 0;

  friend bool operator==(const SanitizeReport&, const SanitizeReport&) = default;
};

void to_json(nlohmann::json& j, const SanitizeReport& r);

struct SanitizeOptions {
  bool strip_text = false;
  // Attribute values starting with "data:" and longer than this are dropped.
  std::size_t base64_min_length = 64;
  int decimal_places = 2;
};

// Best-effort cleanup of SVG markup:
//  - drops <?xml ...?> declarations and <!DOCTYPE ...> headers,
//  - drops embedded data: payloads together with their attribute,
//  - rounds numeric literals inside attribute values to two decimal places,
//  - optionally removes <text> elements and everything inside them,
//  - normalizes whitespace between and inside tags.
// Malformed markup passes through; the function is idempotent.
std::pair<SvgSource, SanitizeReport> sanitize_svg(const SvgSource& src, const SanitizeOptions& options = {});

inline constexpr const char* kSvgLexVocab = "svg-lex-v1";
inline constexpr std::int32_t kSvgLexVocabSize = 1 << 16;

// Deterministic model-independent tokenizer. One token per XML delimiter,
// per element or attribute name, per word of a value, and per numeric literal.
TokenSequence lex_svg(const SvgSource& src);

}  // namespace rlrf
