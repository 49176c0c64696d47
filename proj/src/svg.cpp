#include "rlrf/svg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string_view>

#include <nlohmann/json.hpp>

namespace rlrf {

std::size_t token_length(const TokenSequence& seq) noexcept { return seq.tokens.size(); }

TokenSequence concat(const TokenSequence& a, const TokenSequence& b) {
  if (a.vocab_id != b.vocab_id) throw std::invalid_argument("concat: vocabulary mismatch");
  TokenSequence out = a;
  out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
  return out;
}

void to_json(nlohmann::json& j, const SanitizeReport& r) {
  j = nlohmann::json{{"removed_headers", r.removed_headers},
                     {"removed_text_elements", r.removed_text_elements},
                     {"removed_base64_payloads", r.removed_base64_payloads},
                     {"decimals_rounded", r.decimals_rounded}};
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_name_start(char c) { return is_alpha(c) || c == '_' || c == ':'; }
bool is_name_char(char c) { return is_name_start(c) || is_digit(c) || c == '-' || c == '.'; }

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (s.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Length of a numeric literal starting at pos, or 0. Sets has_fraction/has_exponent.
std::size_t scan_number(std::string_view s, std::size_t pos, bool& has_fraction, bool& has_exponent) {
  has_fraction = has_exponent = false;
  std::size_t i = pos;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  std::size_t int_digits = 0;
  while (i < s.size() && is_digit(s[i])) ++i, ++int_digits;
  std::size_t frac_digits = 0;
  if (i < s.size() && s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i, ++frac_digits;
    has_fraction = true;
  }
  if (int_digits == 0 && frac_digits == 0) return 0;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    std::size_t j = i + 1;
    if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
    if (j < s.size() && is_digit(s[j])) {
      while (j < s.size() && is_digit(s[j])) ++j;
      i = j;
      has_exponent = true;
    }
  }
  return i - pos;
}

std::string format_rounded(double value, int places, bool leading_dot) {
  const double scale = std::pow(10.0, places);
  double rounded = std::round(value * scale) / scale;
  if (rounded == 0.0) rounded = 0.0;  // drops negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, rounded);
  std::string out(buf);
  if (out.find('.') != std::string::npos) {
    while (out.back() == '0') out.pop_back();
    if (out.back() == '.') out.pop_back();
  }
  if (leading_dot) {
    if (out.starts_with("0.")) out.erase(0, 1);
    else if (out.starts_with("-0.")) out.erase(1, 1);
  }
  return out;
}

std::string collapse_whitespace(std::string_view v) {
  std::string out;
  out.reserve(v.size());
  bool pending_space = false;
  for (char c : v) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

bool skips_rounding(std::string_view name) {
  return name == "id" || name == "class" || name == "href" || name == "xlink:href" || name == "xmlns" ||
         name.starts_with("xmlns:");
}

std::string round_numbers(std::string_view value, int places, int& rounded_count) {
  std::string out;
  out.reserve(value.size());
  std::size_t i = 0;
  while (i < value.size()) {
    char c = value[i];
    if (c == '#') {
      out.push_back(c);
      ++i;
      while (i < value.size() && (is_alpha(value[i]) || is_digit(value[i]))) out.push_back(value[i++]);
      continue;
    }
    bool frac = false, expo = false;
    std::size_t n = (is_digit(c) || c == '.' || c == '+' || c == '-') ? scan_number(value, i, frac, expo) : 0;
    if (n == 0) {
      out.push_back(c);
      ++i;
      continue;
    }
    std::string_view literal = value.substr(i, n);
    if (!frac && !expo) {
      out.append(literal);
      i += n;
      continue;
    }
    std::size_t body = (literal[0] == '+' || literal[0] == '-') ? 1 : 0;
    bool leading_dot = literal[body] == '.';
    std::string formatted = format_rounded(std::strtod(std::string(literal).c_str(), nullptr), places, leading_dot);
    if (literal[0] == '+' && formatted[0] != '-') formatted.insert(formatted.begin(), '+');
    if (formatted != literal) ++rounded_count;
    out.append(formatted);
    i += n;
    if (formatted.find('.') == std::string::npos && i < value.size() && value[i] == '.') out.push_back(' ');
  }
  return out;
}

struct Attribute {
  std::string name;
  std::string value;
  char quote = '"';
  bool has_value = true;
};

struct Tag {
  bool closing = false;
  bool self_closing = false;
  std::string name;
  std::vector<Attribute> attributes;
};

// Finds the '>' that ends the tag opened at pos, honoring quotes.
std::optional<std::size_t> find_tag_end(std::string_view s, std::size_t pos) {
  char quote = 0;
  for (std::size_t i = pos + 1; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      return i;
    } else if (c == '<') {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<Tag> parse_tag(std::string_view raw) {
  // raw includes the surrounding '<' and '>'.
  Tag tag;
  std::size_t i = 1, end = raw.size() - 1;
  if (i < end && raw[i] == '/') {
    tag.closing = true;
    ++i;
  }
  if (i >= end || !is_name_start(raw[i])) return std::nullopt;
  std::size_t start = i;
  while (i < end && is_name_char(raw[i])) ++i;
  tag.name = std::string(raw.substr(start, i - start));
  while (true) {
    while (i < end && is_space(raw[i])) ++i;
    if (i >= end) break;
    if (raw[i] == '/' && i + 1 == end) {
      if (tag.closing) return std::nullopt;
      tag.self_closing = true;
      break;
    }
    if (tag.closing || !is_name_start(raw[i])) return std::nullopt;
    Attribute attr;
    start = i;
    while (i < end && is_name_char(raw[i])) ++i;
    attr.name = std::string(raw.substr(start, i - start));
    std::size_t j = i;
    while (j < end && is_space(raw[j])) ++j;
    if (j < end && raw[j] == '=') {
      ++j;
      while (j < end && is_space(raw[j])) ++j;
      if (j >= end) return std::nullopt;
      if (raw[j] == '"' || raw[j] == '\'') {
        char q = raw[j];
        std::size_t close = raw.find(q, j + 1);
        if (close == std::string_view::npos || close >= end) return std::nullopt;
        attr.quote = q;
        attr.value = std::string(raw.substr(j + 1, close - j - 1));
        i = close + 1;
      } else {
        start = j;
        while (j < end && !is_space(raw[j]) && !(raw[j] == '/' && j + 1 == end)) ++j;
        attr.value = std::string(raw.substr(start, j - start));
        attr.quote = attr.value.find('"') == std::string::npos ? '"' : '\'';
        i = j;
      }
    } else {
      attr.has_value = false;
    }
    tag.attributes.push_back(std::move(attr));
  }
  return tag;
}

std::string render_tag(const Tag& tag) {
  std::string out = tag.closing ? "</" : "<";
  out += tag.name;
  for (const auto& a : tag.attributes) {
    out += ' ';
    out += a.name;
    if (a.has_value) {
      out += '=';
      out += a.quote;
      out += a.value;
      out += a.quote;
    }
  }
  out += tag.self_closing ? "/>" : ">";
  return out;
}

}  // namespace

namespace {

std::pair<std::string, SanitizeReport> sanitize_pass(std::string_view s, const SanitizeOptions& options) {
  std::string out;
  out.reserve(s.size());
  SanitizeReport report;

  // Depth of <text> elements currently being skipped.
  int text_skip_depth = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '<') {
      std::size_t next = s.find('<', i);
      if (next == std::string_view::npos) next = s.size();
      std::string_view chunk = s.substr(i, next - i);
      bool blank = std::all_of(chunk.begin(), chunk.end(), is_space);
      if (!blank && text_skip_depth == 0) out.append(chunk);
      i = next;
      continue;
    }

    if (s.compare(i, 4, "<!--") == 0) {
      std::size_t close = s.find("-->", i + 4);
      std::size_t stop = close == std::string_view::npos ? s.size() : close + 3;
      if (text_skip_depth == 0) out.append(s.substr(i, stop - i));
      i = stop;
      continue;
    }
    if (s.compare(i, 9, "<![CDATA[") == 0) {
      std::size_t close = s.find("]]>", i + 9);
      std::size_t stop = close == std::string_view::npos ? s.size() : close + 3;
      if (text_skip_depth == 0) out.append(s.substr(i, stop - i));
      i = stop;
      continue;
    }
    if (s.compare(i, 2, "<?") == 0) {
      std::size_t close = s.find("?>", i + 2);
      std::size_t stop = close == std::string_view::npos ? s.size() : close + 2;
      bool xml_decl = starts_with_ci(s, i, "<?xml") && (i + 5 >= s.size() || is_space(s[i + 5]) || s[i + 5] == '?');
      if (xml_decl && close != std::string_view::npos) {
        ++report.removed_headers;
      } else if (text_skip_depth == 0) {
        out.append(s.substr(i, stop - i));
      }
      i = stop;
      continue;
    }
    if (starts_with_ci(s, i, "<!DOCTYPE")) {
      // The internal subset may contain '>' inside brackets.
      std::size_t j = i + 9;
      int bracket = 0;
      while (j < s.size() && !(s[j] == '>' && bracket == 0)) {
        if (s[j] == '[') ++bracket;
        if (s[j] == ']') --bracket;
        ++j;
      }
      if (j < s.size()) {
        ++report.removed_headers;
        i = j + 1;
      } else {
        if (text_skip_depth == 0) out.append(s.substr(i));
        i = s.size();
      }
      continue;
    }

    auto end = find_tag_end(s, i);
    if (!end) {
      // Unterminated tag: the rest of the document passes through untouched.
      std::size_t next = s.find('<', i + 1);
      if (next == std::string_view::npos) next = s.size();
      if (text_skip_depth == 0) out.append(s.substr(i, next - i));
      i = next;
      continue;
    }
    std::string_view raw = s.substr(i, *end - i + 1);
    i = *end + 1;
    auto tag = parse_tag(raw);
    if (!tag) {
      if (text_skip_depth == 0) out.append(raw);
      continue;
    }

    if (options.strip_text && tag->name == "text") {
      if (tag->closing) {
        if (text_skip_depth > 0) --text_skip_depth;
        else out.append(render_tag(*tag));  // stray close tag
      } else {
        if (text_skip_depth == 0) ++report.removed_text_elements;
        if (!tag->self_closing) ++text_skip_depth;
      }
      continue;
    }
    if (text_skip_depth > 0) continue;

    std::vector<Attribute> kept;
    kept.reserve(tag->attributes.size());
    for (auto& attr : tag->attributes) {
      if (attr.has_value) {
        attr.value = collapse_whitespace(attr.value);
        if (attr.value.starts_with("data:") && attr.value.size() > options.base64_min_length) {
          ++report.removed_base64_payloads;
          continue;
        }
        if (!skips_rounding(attr.name) && !attr.value.starts_with("data:")) {
          attr.value = round_numbers(attr.value, options.decimal_places, report.decimals_rounded);
        }
      }
      kept.push_back(std::move(attr));
    }
    tag->attributes = std::move(kept);
    out += render_tag(*tag);
  }
  return {std::move(out), report};
}

}  // namespace

std::pair<SvgSource, SanitizeReport> sanitize_svg(const SvgSource& src, const SanitizeOptions& options) {
  // Dropping material can join fragments of malformed markup into new tags,
  // so passes repeat until the text is stable. That makes the result idempotent.
  std::string text = src.text;
  SanitizeReport total;
  for (int pass = 0; pass < 16; ++pass) {
    auto [next, r] = sanitize_pass(text, options);
    total.removed_headers += r.removed_headers;
    total.removed_text_elements += r.removed_text_elements;
    total.removed_base64_payloads += r.removed_base64_payloads;
    total.decimals_rounded += r.decimals_rounded;
    if (next == text) break;
    text = std::move(next);
  }
  return {SvgSource{std::move(text)}, total};
}

namespace {

// Fixed ids for delimiters; everything else hashes into the remaining range.
constexpr std::string_view kDelimiters[] = {"<!--", "-->", "<![CDATA[", "]]>", "<?", "?>", "</", "/>",
                                           "<!", "<", ">", "=", "\"", "'"};
constexpr std::int32_t kReserved = 32;

std::int32_t delimiter_id(std::string_view d) {
  for (std::size_t k = 0; k < std::size(kDelimiters); ++k) {
    if (kDelimiters[k] == d) return static_cast<std::int32_t>(k);
  }
  return kReserved - 1;
}

std::int32_t hashed_id(std::string_view text) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : text) {
    h ^= c;
    h *= 16777619u;
  }
  return kReserved + static_cast<std::int32_t>(h % static_cast<std::uint32_t>(kSvgLexVocabSize - kReserved));
}

}  // namespace

TokenSequence lex_svg(const SvgSource& src) {
  std::string_view s = src.text;
  TokenSequence seq;
  seq.vocab_id = kSvgLexVocab;
  auto& t = seq.tokens;

  bool in_tag = false;
  char quote = 0;
  std::size_t i = 0;
  auto emit_delim = [&](std::string_view d) {
    t.push_back(delimiter_id(d));
    i += d.size();
  };

  while (i < s.size()) {
    char c = s[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (!quote) {
      bool matched = false;
      for (std::string_view d : kDelimiters) {
        if (d == "\"" || d == "'") continue;
        if (s.compare(i, d.size(), d) == 0) {
          if (d.starts_with("<")) in_tag = true;
          if (d.ends_with(">")) in_tag = false;
          emit_delim(d);
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (in_tag && (c == '"' || c == '\'')) {
        quote = c;
        emit_delim(std::string_view(&s[i], 1));
        continue;
      }
      if (in_tag && is_name_start(c)) {
        std::size_t start = i;
        while (i < s.size() && is_name_char(s[i])) ++i;
        t.push_back(hashed_id(s.substr(start, i - start)));
        continue;
      }
    } else if (c == quote) {
      quote = 0;
      emit_delim(std::string_view(&s[i], 1));
      continue;
    }

    // Value or text content.
    bool frac = false, expo = false;
    if (std::size_t n = scan_number(s, i, frac, expo); n > 0) {
      t.push_back(hashed_id(s.substr(i, n)));
      i += n;
      continue;
    }
    if (is_alpha(c) || c == '_') {
      std::size_t start = i;
      while (i < s.size() && (is_alpha(s[i]) || s[i] == '_' || (s[i] == '-' && i + 1 < s.size() && is_alpha(s[i + 1])))) {
        ++i;
      }
      t.push_back(hashed_id(s.substr(start, i - start)));
      continue;
    }
    // Any other byte (including UTF-8 continuation bytes) is its own token.
    t.push_back(hashed_id(s.substr(i, 1)));
    ++i;
  }
  return seq;
}

}  // namespace rlrf
