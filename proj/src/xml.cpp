#include "rlrf/xml.hpp"

#include <cstdint>
#include <cstdlib>

#include "rlrf/error.hpp"

namespace rlrf::xml {

const std::string* Node::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return &v;
  }
  return nullptr;
}

namespace {

[[noreturn]] void fail(const std::string& what, std::size_t pos) {
  throw RenderError(RenderError::Kind::parse, "xml: " + what + " at offset " + std::to_string(pos));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_name_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' || static_cast<unsigned char>(c) >= 0x80;
}
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.'; }

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  Node document() {
    skip_misc();
    if (pos_ >= s_.size() || s_[pos_] != '<') fail("expected root element", pos_);
    Node root = element();
    skip_misc();
    if (pos_ != s_.size()) fail("content after root element", pos_);
    return root;
  }

 private:
  bool at(std::string_view lit) const { return s_.compare(pos_, lit.size(), lit) == 0; }

  void skip_until(std::string_view terminator, const char* what) {
    std::size_t end = s_.find(terminator, pos_);
    if (end == std::string_view::npos) fail(std::string("unterminated ") + what, pos_);
    pos_ = end + terminator.size();
  }

  void skip_space() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }

  // Whitespace, comments, processing instructions and DOCTYPE outside the root.
  void skip_misc() {
    while (true) {
      skip_space();
      if (at("<!--")) {
        skip_until("-->", "comment");
      } else if (at("<?")) {
        skip_until("?>", "processing instruction");
      } else if (at("<!DOCTYPE") || at("<!doctype")) {
        int bracket = 0;
        while (pos_ < s_.size() && !(s_[pos_] == '>' && bracket == 0)) {
          if (s_[pos_] == '[') ++bracket;
          if (s_[pos_] == ']') --bracket;
          ++pos_;
        }
        if (pos_ >= s_.size()) fail("unterminated DOCTYPE", pos_);
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::string name() {
    std::size_t start = pos_;
    if (pos_ >= s_.size() || !is_name_start(s_[pos_])) fail("expected name", pos_);
    while (pos_ < s_.size() && is_name_char(s_[pos_])) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string decode(std::string_view raw, std::size_t origin) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        if (raw[i] == '<') fail("'<' in character data", origin + i);
        out.push_back(raw[i]);
        continue;
      }
      std::size_t semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail("unterminated entity", origin + i);
      std::string_view ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") out.push_back('&');
      else if (ent == "lt") out.push_back('<');
      else if (ent == "gt") out.push_back('>');
      else if (ent == "quot") out.push_back('"');
      else if (ent == "apos") out.push_back('\'');
      else if (ent.size() > 1 && ent[0] == '#') {
        bool hex = ent[1] == 'x' || ent[1] == 'X';
        std::string digits(ent.substr(hex ? 2 : 1));
        char* endp = nullptr;
        unsigned long cp = std::strtoul(digits.c_str(), &endp, hex ? 16 : 10);
        if (digits.empty() || *endp != '\0' || cp > 0x10FFFF) fail("bad character reference", origin + i);
        append_utf8(out, static_cast<std::uint32_t>(cp));
      } else {
        // Entities declared in a DOCTYPE subset are not expanded.
        out.append(raw.substr(i, semi - i + 1));
      }
      i = semi;
    }
    return out;
  }

  Node element() {
    Node node;
    ++pos_;  // '<'
    node.name = name();
    while (true) {
      std::size_t before = pos_;
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated start tag <" + node.name, pos_);
      if (at("/>")) {
        pos_ += 2;
        return node;
      }
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (before == pos_) fail("expected whitespace before attribute", pos_);
      std::string key = name();
      skip_space();
      if (pos_ >= s_.size() || s_[pos_] != '=') fail("expected '=' after attribute " + key, pos_);
      ++pos_;
      skip_space();
      if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("expected quoted attribute value", pos_);
      char quote = s_[pos_++];
      std::size_t end = s_.find(quote, pos_);
      if (end == std::string_view::npos) fail("unterminated attribute value", pos_);
      std::string value = decode(s_.substr(pos_, end - pos_), pos_);
      pos_ = end + 1;
      for (const auto& [k, v] : node.attributes) {
        if (k == key) fail("duplicate attribute " + key, pos_);
      }
      node.attributes.emplace_back(std::move(key), std::move(value));
    }

    // Content.
    while (true) {
      if (pos_ >= s_.size()) fail("unclosed element <" + node.name + ">", pos_);
      if (at("</")) {
        pos_ += 2;
        std::string closing = name();
        if (closing != node.name) fail("mismatched closing tag </" + closing + "> for <" + node.name + ">", pos_);
        skip_space();
        if (pos_ >= s_.size() || s_[pos_] != '>') fail("unterminated end tag", pos_);
        ++pos_;
        return node;
      }
      if (at("<!--")) {
        skip_until("-->", "comment");
      } else if (at("<![CDATA[")) {
        pos_ += 9;
        std::size_t end = s_.find("]]>", pos_);
        if (end == std::string_view::npos) fail("unterminated CDATA", pos_);
        node.text.append(s_.substr(pos_, end - pos_));
        pos_ = end + 3;
      } else if (at("<?")) {
        skip_until("?>", "processing instruction");
      } else if (s_[pos_] == '<') {
        node.children.push_back(element());
      } else {
        std::size_t end = s_.find('<', pos_);
        if (end == std::string_view::npos) end = s_.size();
        node.text += decode(s_.substr(pos_, end - pos_), pos_);
        pos_ = end;
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

Node parse(std::string_view text) { return Parser(text).document(); }

}  // namespace rlrf::xml
