#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rlrf/error.hpp"
#include "rlrf/raster.hpp"
#include "rlrf/xml.hpp"

namespace rlrf {

void RenderSpec::validate() const {
  if (ref_width < 1 || ref_height < 1) throw ConfigError("RenderSpec: reference size must be >= 1");
  for (double c : background) {
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("RenderSpec: background must be in [0,1]");
  }
}

namespace {

using Kind = RenderError::Kind;

struct Point {
  double x, y;
};

struct Affine {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

  Point apply(Point p) const { return {a * p.x + c * p.y + e, b * p.x + d * p.y + f}; }

  // this * other: other is applied first.
  Affine operator*(const Affine& o) const {
    return {a * o.a + c * o.b, b * o.a + d * o.b, a * o.c + c * o.d, b * o.c + d * o.d,
            a * o.e + c * o.f + e, b * o.e + d * o.f + f};
  }

  double scale_estimate() const { return std::sqrt(std::abs(a * d - b * c)); }
};

struct Subpath {
  std::vector<Point> points;
  bool closed = false;
};

using Path = std::vector<Subpath>;

// ---------------------------------------------------------------- parsing --

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ','; }

class NumberStream {
 public:
  explicit NumberStream(std::string_view s) : s_(s) {}

  void skip() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }
  bool done() {
    skip();
    return pos_ >= s_.size();
  }
  char peek() {
    skip();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  char take() { return s_[pos_++]; }

  bool next_is_number() {
    char c = peek();
    return (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+';
  }

  double number() {
    skip();
    std::size_t start = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
    bool digits = false;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, digits = true;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, digits = true;
    }
    if (!digits) throw RenderError(Kind::parse, "expected number in '" + std::string(s_) + "'");
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    double v = std::strtod(std::string(s_.substr(start, pos_ - start)).c_str(), nullptr);
    if (!std::isfinite(v)) throw RenderError(Kind::parse, "non-finite number");
    return v;
  }

  // Arc flags may be written without separators ("a1 1 0 01 1 1").
  bool flag() {
    char c = peek();
    if (c != '0' && c != '1') throw RenderError(Kind::parse, "bad arc flag");
    ++pos_;
    return c == '1';
  }

  std::vector<double> all_numbers() {
    std::vector<double> out;
    while (!done()) out.push_back(number());
    return out;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Lengths resolve to user units; percentages resolve against `reference`.
double parse_length(std::string_view raw, double reference = 0.0) {
  std::string s = trim(raw);
  if (s.empty()) throw RenderError(Kind::parse, "empty length");
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || !std::isfinite(v)) throw RenderError(Kind::parse, "bad length '" + s + "'");
  std::string unit = lower(trim(end));
  if (unit.empty() || unit == "px") return v;
  if (unit == "%") return v / 100.0 * reference;
  if (unit == "pt") return v * 4.0 / 3.0;
  if (unit == "pc") return v * 16.0;
  if (unit == "mm") return v * 96.0 / 25.4;
  if (unit == "cm") return v * 96.0 / 2.54;
  if (unit == "in") return v * 96.0;
  if (unit == "em") return v * 16.0;
  if (unit == "ex") return v * 8.0;
  throw RenderError(Kind::parse, "unknown length unit '" + unit + "'");
}

Affine parse_transform(std::string_view s) {
  Affine m;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == ',')) ++i;
    if (i >= s.size()) break;
    std::size_t open = s.find('(', i);
    std::size_t close = s.find(')', i);
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
      throw RenderError(Kind::parse, "bad transform '" + std::string(s) + "'");
    }
    std::string fn = trim(s.substr(i, open - i));
    auto args = NumberStream(s.substr(open + 1, close - open - 1)).all_numbers();
    auto need = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) throw RenderError(Kind::parse, "bad argument count for " + fn);
    };
    Affine t;
    if (fn == "matrix") {
      need(6, 6);
      t = {args[0], args[1], args[2], args[3], args[4], args[5]};
    } else if (fn == "translate") {
      need(1, 2);
      t.e = args[0];
      t.f = args.size() > 1 ? args[1] : 0.0;
    } else if (fn == "scale") {
      need(1, 2);
      t.a = args[0];
      t.d = args.size() > 1 ? args[1] : args[0];
    } else if (fn == "rotate") {
      need(1, 3);
      double r = args[0] * std::numbers::pi / 180.0;
      Affine rot{std::cos(r), std::sin(r), -std::sin(r), std::cos(r), 0, 0};
      if (args.size() == 3) {
        Affine to{1, 0, 0, 1, args[1], args[2]}, back{1, 0, 0, 1, -args[1], -args[2]};
        t = to * rot * back;
      } else {
        t = rot;
      }
    } else if (fn == "skewX") {
      need(1, 1);
      t.c = std::tan(args[0] * std::numbers::pi / 180.0);
    } else if (fn == "skewY") {
      need(1, 1);
      t.b = std::tan(args[0] * std::numbers::pi / 180.0);
    } else {
      throw RenderError(Kind::parse, "unknown transform '" + fn + "'");
    }
    m = m * t;
    i = close + 1;
  }
  return m;
}

const std::unordered_map<std::string, Rgb>& named_colors() {
  static const std::unordered_map<std::string, Rgb> table = [] {
    std::unordered_map<std::string, Rgb> t;
    auto add = [&](const char* name, int r, int g, int b) { t[name] = {r / 255.0, g / 255.0, b / 255.0}; };
    add("black", 0, 0, 0);
    add("white", 255, 255, 255);
    add("red", 255, 0, 0);
    add("green", 0, 128, 0);
    add("lime", 0, 255, 0);
    add("blue", 0, 0, 255);
    add("yellow", 255, 255, 0);
    add("cyan", 0, 255, 255);
    add("aqua", 0, 255, 255);
    add("magenta", 255, 0, 255);
    add("fuchsia", 255, 0, 255);
    add("gray", 128, 128, 128);
    add("grey", 128, 128, 128);
    add("silver", 192, 192, 192);
    add("maroon", 128, 0, 0);
    add("olive", 128, 128, 0);
    add("purple", 128, 0, 128);
    add("teal", 0, 128, 128);
    add("navy", 0, 0, 128);
    add("orange", 255, 165, 0);
    add("pink", 255, 192, 203);
    add("brown", 165, 42, 42);
    add("gold", 255, 215, 0);
    add("violet", 238, 130, 238);
    add("indigo", 75, 0, 130);
    add("darkgray", 169, 169, 169);
    add("darkgrey", 169, 169, 169);
    add("lightgray", 211, 211, 211);
    add("lightgrey", 211, 211, 211);
    add("darkred", 139, 0, 0);
    add("darkgreen", 0, 100, 0);
    add("darkblue", 0, 0, 139);
    add("lightblue", 173, 216, 230);
    add("skyblue", 135, 206, 235);
    add("steelblue", 70, 130, 180);
    add("tomato", 255, 99, 71);
    add("coral", 255, 127, 80);
    add("salmon", 250, 128, 114);
    add("khaki", 240, 230, 140);
    add("beige", 245, 245, 220);
    add("ivory", 255, 255, 240);
    add("tan", 210, 180, 140);
    add("chocolate", 210, 105, 30);
    add("crimson", 220, 20, 60);
    add("turquoise", 64, 224, 208);
    add("orchid", 218, 112, 214);
    add("plum", 221, 160, 221);
    add("lavender", 230, 230, 250);
    add("whitesmoke", 245, 245, 245);
    add("gainsboro", 220, 220, 220);
    add("dimgray", 105, 105, 105);
    add("dimgrey", 105, 105, 105);
    add("slategray", 112, 128, 144);
    add("forestgreen", 34, 139, 34);
    add("seagreen", 46, 139, 87);
    add("limegreen", 50, 205, 50);
    add("royalblue", 65, 105, 225);
    add("dodgerblue", 30, 144, 255);
    add("midnightblue", 25, 25, 112);
    add("firebrick", 178, 34, 34);
    add("darkorange", 255, 140, 0);
    add("goldenrod", 218, 165, 32);
    add("sienna", 160, 82, 45);
    return t;
  }();
  return table;
}

struct Paint {
  enum class Type { none, color, url, current } type = Type::none;
  Rgb color{0, 0, 0};
  std::string ref;
};

double parse_color_component(std::string_view raw) {
  std::string s = trim(raw);
  if (!s.empty() && s.back() == '%') {
    return std::clamp(std::strtod(s.c_str(), nullptr) / 100.0, 0.0, 1.0);
  }
  return std::clamp(std::strtod(s.c_str(), nullptr) / 255.0, 0.0, 1.0);
}

std::optional<Rgb> parse_color(std::string_view raw) {
  std::string s = lower(trim(raw));
  if (s.starts_with("#")) {
    std::string hex = s.substr(1);
    for (char c : hex) {
      if (!std::isxdigit(static_cast<unsigned char>(c))) return std::nullopt;
    }
    auto nib = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : c - 'a' + 10; };
    if (hex.size() == 3 || hex.size() == 4) {
      return Rgb{nib(hex[0]) * 17 / 255.0, nib(hex[1]) * 17 / 255.0, nib(hex[2]) * 17 / 255.0};
    }
    if (hex.size() == 6 || hex.size() == 8) {
      return Rgb{(nib(hex[0]) * 16 + nib(hex[1])) / 255.0, (nib(hex[2]) * 16 + nib(hex[3])) / 255.0,
                 (nib(hex[4]) * 16 + nib(hex[5])) / 255.0};
    }
    return std::nullopt;
  }
  if (s.starts_with("rgb(") || s.starts_with("rgba(")) {
    std::size_t open = s.find('('), close = s.find(')');
    if (close == std::string::npos) return std::nullopt;
    std::string inner = s.substr(open + 1, close - open - 1);
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= inner.size(); ++i) {
      if (i == inner.size() || inner[i] == ',' || inner[i] == ' ') {
        if (i > start) parts.push_back(inner.substr(start, i - start));
        start = i + 1;
      }
    }
    if (parts.size() < 3) return std::nullopt;
    return Rgb{parse_color_component(parts[0]), parse_color_component(parts[1]), parse_color_component(parts[2])};
  }
  auto& table = named_colors();
  if (auto it = table.find(s); it != table.end()) return it->second;
  return std::nullopt;
}

std::optional<Paint> parse_paint(std::string_view raw) {
  std::string s = trim(raw);
  Paint p;
  if (s == "none" || s == "transparent") return p;
  if (s == "currentColor" || s == "currentcolor") {
    p.type = Paint::Type::current;
    return p;
  }
  if (s.starts_with("url(")) {
    std::size_t close = s.find(')');
    if (close == std::string::npos) return std::nullopt;
    std::string ref = trim(std::string_view(s).substr(4, close - 4));
    if (!ref.empty() && (ref.front() == '\'' || ref.front() == '"')) ref = ref.substr(1, ref.size() - 2);
    if (!ref.starts_with("#")) throw RenderError(Kind::unsupported, "external paint reference " + ref);
    p.type = Paint::Type::url;
    p.ref = ref.substr(1);
    return p;
  }
  if (auto c = parse_color(s)) {
    p.type = Paint::Type::color;
    p.color = *c;
    return p;
  }
  return std::nullopt;
}

double parse_opacity(std::string_view raw) {
  std::string s = trim(raw);
  double v = std::strtod(s.c_str(), nullptr);
  if (!s.empty() && s.back() == '%') v /= 100.0;
  return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------- geometry --

class PathBuilder {
 public:
  explicit PathBuilder(double tolerance) : tol_(tolerance) {}

  void move_to(Point p) {
    flush();
    current_.points = {p};
    start_ = p;
  }
  void line_to(Point p) {
    if (current_.points.empty()) current_.points.push_back(last());
    current_.points.push_back(p);
  }
  void cubic_to(Point c1, Point c2, Point p) {
    Point p0 = last();
    int n = segments(p0, c1, c2, p);
    for (int i = 1; i <= n; ++i) {
      double t = static_cast<double>(i) / n, u = 1 - t;
      line_to({u * u * u * p0.x + 3 * u * u * t * c1.x + 3 * u * t * t * c2.x + t * t * t * p.x,
               u * u * u * p0.y + 3 * u * u * t * c1.y + 3 * u * t * t * c2.y + t * t * t * p.y});
    }
  }
  void quad_to(Point c, Point p) {
    Point p0 = last();
    cubic_to({p0.x + 2.0 / 3.0 * (c.x - p0.x), p0.y + 2.0 / 3.0 * (c.y - p0.y)},
             {p.x + 2.0 / 3.0 * (c.x - p.x), p.y + 2.0 / 3.0 * (c.y - p.y)}, p);
  }
  void arc_to(double rx, double ry, double phi_deg, bool large, bool sweep, Point p) {
    Point p0 = last();
    if (p0.x == p.x && p0.y == p.y) return;
    rx = std::abs(rx);
    ry = std::abs(ry);
    if (rx == 0 || ry == 0) {
      line_to(p);
      return;
    }
    // Endpoint to center parameterization.
    double phi = phi_deg * std::numbers::pi / 180.0;
    double cp = std::cos(phi), sp = std::sin(phi);
    double dx = (p0.x - p.x) / 2, dy = (p0.y - p.y) / 2;
    double x1 = cp * dx + sp * dy, y1 = -sp * dx + cp * dy;
    double lambda = (x1 * x1) / (rx * rx) + (y1 * y1) / (ry * ry);
    if (lambda > 1) {
      rx *= std::sqrt(lambda);
      ry *= std::sqrt(lambda);
    }
    double num = rx * rx * ry * ry - rx * rx * y1 * y1 - ry * ry * x1 * x1;
    double den = rx * rx * y1 * y1 + ry * ry * x1 * x1;
    double coef = std::sqrt(std::max(0.0, num / den)) * (large == sweep ? -1 : 1);
    double cxp = coef * rx * y1 / ry, cyp = -coef * ry * x1 / rx;
    double cx = cp * cxp - sp * cyp + (p0.x + p.x) / 2;
    double cy = sp * cxp + cp * cyp + (p0.y + p.y) / 2;
    auto angle = [](double ux, double uy, double vx, double vy) {
      return std::atan2(ux * vy - uy * vx, ux * vx + uy * vy);
    };
    double theta = angle(1, 0, (x1 - cxp) / rx, (y1 - cyp) / ry);
    double delta = angle((x1 - cxp) / rx, (y1 - cyp) / ry, (-x1 - cxp) / rx, (-y1 - cyp) / ry);
    if (!sweep && delta > 0) delta -= 2 * std::numbers::pi;
    if (sweep && delta < 0) delta += 2 * std::numbers::pi;
    int n = std::clamp(static_cast<int>(std::ceil(std::abs(delta) * std::sqrt(std::max(rx, ry) / tol_) / 2.0)), 4, 512);
    for (int i = 1; i <= n; ++i) {
      double t = theta + delta * i / n;
      double ex = rx * std::cos(t), ey = ry * std::sin(t);
      line_to({cp * ex - sp * ey + cx, sp * ex + cp * ey + cy});
    }
    current_.points.back() = p;
  }
  void close() {
    if (!current_.points.empty()) {
      current_.closed = true;
      Point s = start_;
      flush();
      current_.points = {s};
    }
  }
  Point last() const { return current_.points.empty() ? start_ : current_.points.back(); }
  Point start() const { return start_; }

  Path finish() {
    flush();
    return std::move(path_);
  }

 private:
  int segments(Point a, Point b, Point c, Point d) const {
    double len = std::hypot(b.x - a.x, b.y - a.y) + std::hypot(c.x - b.x, c.y - b.y) + std::hypot(d.x - c.x, d.y - c.y);
    return std::clamp(static_cast<int>(std::ceil(std::sqrt(len / tol_) * 2)), 2, 256);
  }
  void flush() {
    if (current_.points.size() > 1 || current_.closed) path_.push_back(std::move(current_));
    current_ = {};
  }

  double tol_;
  Path path_;
  Subpath current_;
  Point start_{0, 0};
};

Path parse_path_data(std::string_view d, double tol) {
  PathBuilder b(tol);
  NumberStream in(d);
  char cmd = 0;
  Point last_ctrl{0, 0};
  char last_cmd = 0;
  bool have_point = false;
  while (!in.done()) {
    char c = in.peek();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cmd = in.take();
    } else if (cmd == 0) {
      throw RenderError(Kind::parse, "path data must start with a command");
    } else if (cmd == 'M') {
      cmd = 'L';
    } else if (cmd == 'm') {
      cmd = 'l';
    } else if (cmd == 'Z' || cmd == 'z') {
      throw RenderError(Kind::parse, "unexpected number after closepath");
    }
    bool rel = std::islower(static_cast<unsigned char>(cmd));
    Point cur = b.last();
    auto pt = [&]() {
      double x = in.number(), y = in.number();
      return rel ? Point{cur.x + x, cur.y + y} : Point{x, y};
    };
    if (!have_point && cmd != 'M' && cmd != 'm') throw RenderError(Kind::parse, "path must begin with moveto");
    switch (std::toupper(static_cast<unsigned char>(cmd))) {
      case 'M':
        b.move_to(pt());
        have_point = true;
        break;
      case 'L':
        b.line_to(pt());
        break;
      case 'H': {
        double x = in.number();
        b.line_to({rel ? cur.x + x : x, cur.y});
        break;
      }
      case 'V': {
        double y = in.number();
        b.line_to({cur.x, rel ? cur.y + y : y});
        break;
      }
      case 'C': {
        Point c1 = pt(), c2 = pt(), p = pt();
        b.cubic_to(c1, c2, p);
        last_ctrl = c2;
        break;
      }
      case 'S': {
        Point c1 = (last_cmd == 'C' || last_cmd == 'S') ? Point{2 * cur.x - last_ctrl.x, 2 * cur.y - last_ctrl.y} : cur;
        Point c2 = pt(), p = pt();
        b.cubic_to(c1, c2, p);
        last_ctrl = c2;
        break;
      }
      case 'Q': {
        Point c1 = pt(), p = pt();
        b.quad_to(c1, p);
        last_ctrl = c1;
        break;
      }
      case 'T': {
        Point c1 = (last_cmd == 'Q' || last_cmd == 'T') ? Point{2 * cur.x - last_ctrl.x, 2 * cur.y - last_ctrl.y} : cur;
        Point p = pt();
        b.quad_to(c1, p);
        last_ctrl = c1;
        break;
      }
      case 'A': {
        double rx = in.number(), ry = in.number(), rot = in.number();
        bool large = in.flag(), sweep = in.flag();
        Point p = pt();
        b.arc_to(rx, ry, rot, large, sweep, p);
        break;
      }
      case 'Z':
        b.close();
        break;
      default:
        throw RenderError(Kind::parse, std::string("unknown path command '") + cmd + "'");
    }
    last_cmd = static_cast<char>(std::toupper(static_cast<unsigned char>(cmd)));
  }
  return b.finish();
}

Subpath ellipse_polygon(double cx, double cy, double rx, double ry, double tol) {
  int n = std::clamp(static_cast<int>(std::ceil(2 * std::numbers::pi * std::sqrt(std::max(rx, ry) / tol))), 8, 1024);
  Subpath s;
  s.closed = true;
  s.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    double t = 2 * std::numbers::pi * i / n;
    s.points.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

double signed_area(const std::vector<Point>& pts) {
  double a = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point& p = pts[i];
    const Point& q = pts[(i + 1) % pts.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return a / 2;
}

void orient_positive(Subpath& s) {
  if (signed_area(s.points) < 0) std::reverse(s.points.begin(), s.points.end());
}

enum class Cap { butt, round, square };

// Stroke outline as a union of same-orientation polygons (fill with nonzero).
Path stroke_outline(const Path& path, double width, Cap cap, double tol) {
  Path out;
  const double hw = width / 2;
  auto disc = [&](Point c) {
    Subpath s = ellipse_polygon(c.x, c.y, hw, hw, tol);
    out.push_back(std::move(s));
  };
  for (const auto& sp : path) {
    std::vector<Point> pts = sp.points;
    if (sp.closed && pts.size() > 1 && (pts.front().x != pts.back().x || pts.front().y != pts.back().y)) {
      pts.push_back(pts.front());
    }
    if (pts.size() < 2) continue;
    bool any_segment = false;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      Point a = pts[i], b = pts[i + 1];
      double dx = b.x - a.x, dy = b.y - a.y, len = std::hypot(dx, dy);
      if (len == 0) continue;
      any_segment = true;
      double nx = -dy / len * hw, ny = dx / len * hw;
      double ex = 0, ey = 0;
      bool first = i == 0, last = i + 2 == pts.size();
      if (!sp.closed && cap == Cap::square) {
        ex = dx / len * hw;
        ey = dy / len * hw;
      }
      Point a2{a.x - (first && !sp.closed ? ex : 0), a.y - (first && !sp.closed ? ey : 0)};
      Point b2{b.x + (last && !sp.closed ? ex : 0), b.y + (last && !sp.closed ? ey : 0)};
      Subpath quad;
      quad.closed = true;
      quad.points = {{a2.x + nx, a2.y + ny}, {a2.x - nx, a2.y - ny}, {b2.x - nx, b2.y - ny}, {b2.x + nx, b2.y + ny}};
      orient_positive(quad);
      out.push_back(std::move(quad));
    }
    if (!any_segment) continue;
    // Round joins at interior vertices.
    std::size_t first_join = sp.closed ? 0 : 1;
    std::size_t last_join = sp.closed ? pts.size() - 1 : pts.size() - 1;
    for (std::size_t i = first_join; i < last_join; ++i) disc(pts[i]);
    if (!sp.closed && cap == Cap::round) {
      disc(pts.front());
      disc(pts.back());
    }
  }
  for (auto& s : out) orient_positive(s);
  return out;
}

// ---------------------------------------------------------------- raster --

class Canvas {
 public:
  Canvas(int w, int h, const Rgb& bg, int subsamples)
      : w_(w), h_(h), ss_(subsamples), color_(RasterImage::filled(w, h, bg)), cov_(static_cast<std::size_t>(w) * h, 0.0f) {}

  // Rasterizes device-space polygons into the coverage buffer and composites.
  void fill(const Path& device_path, bool even_odd, const Rgb& color, double alpha) {
    if (alpha <= 0) return;
    struct Edge {
      double x0, y0, x1, y1;
      int dir;
    };
    std::vector<Edge> edges;
    double ymin = h_, ymax = 0;
    for (const auto& sp : device_path) {
      const auto& p = sp.points;
      for (std::size_t i = 0; i < p.size(); ++i) {
        Point a = p[i], b = p[(i + 1) % p.size()];
        if (a.y == b.y) continue;
        if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(b.x) || !std::isfinite(b.y)) continue;
        int dir = a.y < b.y ? 1 : -1;
        if (dir < 0) std::swap(a, b);
        edges.push_back({a.x, a.y, b.x, b.y, dir});
        ymin = std::min(ymin, a.y);
        ymax = std::max(ymax, b.y);
      }
    }
    if (edges.empty()) return;
    int row_lo = std::max(0, static_cast<int>(std::floor(ymin)));
    int row_hi = std::min(h_ - 1, static_cast<int>(std::ceil(ymax)));
    if (row_lo > row_hi) return;

    std::vector<std::pair<double, int>> xs;
    int col_lo = w_, col_hi = -1;
    const float sample_weight = 1.0f / ss_;
    for (int row = row_lo; row <= row_hi; ++row) {
      for (int k = 0; k < ss_; ++k) {
        double y = row + (k + 0.5) / ss_;
        xs.clear();
        for (const auto& e : edges) {
          if (y < e.y0 || y >= e.y1) continue;
          double t = (y - e.y0) / (e.y1 - e.y0);
          xs.emplace_back(e.x0 + t * (e.x1 - e.x0), e.dir);
        }
        if (xs.size() < 2) continue;
        std::sort(xs.begin(), xs.end());
        int winding = 0;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
          winding += xs[i].second;
          bool inside = even_odd ? (winding % 2 != 0) : (winding != 0);
          if (!inside) continue;
          double xa = std::clamp(xs[i].first, 0.0, static_cast<double>(w_));
          double xb = std::clamp(xs[i + 1].first, 0.0, static_cast<double>(w_));
          if (xb <= xa) continue;
          add_span(row, xa, xb, sample_weight);
          col_lo = std::min(col_lo, static_cast<int>(xa));
          col_hi = std::max(col_hi, std::min(w_ - 1, static_cast<int>(xb)));
        }
      }
    }
    if (col_hi < col_lo) return;
    for (int row = row_lo; row <= row_hi; ++row) {
      for (int col = col_lo; col <= col_hi; ++col) {
        float& c = cov_[static_cast<std::size_t>(row) * w_ + col];
        if (c <= 0.0f) continue;
        double a = alpha * std::min(1.0f, c);
        for (int ch = 0; ch < 3; ++ch) {
          double& dst = color_.at(col, row, ch);
          dst = dst * (1 - a) + color[ch] * a;
        }
        c = 0.0f;
      }
    }
  }

  RasterImage take() {
    for (auto& v : color_.data()) v = std::clamp(v, 0.0, 1.0);
    return std::move(color_);
  }

 private:
  void add_span(int row, double xa, double xb, float weight) {
    float* line = &cov_[static_cast<std::size_t>(row) * w_];
    int ia = static_cast<int>(xa), ib = static_cast<int>(xb);
    if (ia == ib) {
      line[std::min(ia, w_ - 1)] += static_cast<float>((xb - xa) * weight);
      return;
    }
    line[ia] += static_cast<float>((ia + 1 - xa) * weight);
    for (int x = ia + 1; x < ib; ++x) line[x] += weight;
    if (ib < w_) line[ib] += static_cast<float>((xb - ib) * weight);
  }

  int w_, h_, ss_;
  RasterImage color_;
  std::vector<float> cov_;
};

// ---------------------------------------------------------------- document --

struct Style {
  Paint fill{Paint::Type::color, {0, 0, 0}, {}};
  Paint stroke{};
  Rgb current_color{0, 0, 0};
  double fill_opacity = 1, stroke_opacity = 1, opacity = 1;
  double stroke_width = 1;
  bool even_odd = false;
  Cap cap = Cap::butt;
  bool visible = true;
};

const std::unordered_set<std::string_view>& unsupported_elements() {
  static const std::unordered_set<std::string_view> s = {
      "text", "image", "script", "foreignObject", "animate", "animateTransform", "animateMotion", "animateColor",
      "set", "iframe", "video", "audio", "canvas", "feImage"};
  return s;
}

const std::unordered_set<std::string_view>& non_rendering_elements() {
  static const std::unordered_set<std::string_view> s = {
      "defs", "title", "desc", "metadata", "style", "clipPath", "mask", "linearGradient", "radialGradient",
      "pattern", "symbol", "marker", "filter", "stop", "font", "font-face", "cursor"};
  return s;
}

class DocumentRenderer {
 public:
  DocumentRenderer(const xml::Node& root, const RenderSpec& spec, int subsamples)
      : root_(root), canvas_(spec.ref_width, spec.ref_height, spec.background, subsamples), spec_(spec) {
    index(root_);
  }

  RasterImage run() {
    if (root_.name != "svg") throw RenderError(Kind::parse, "root element is <" + root_.name + ">, not <svg>");
    // Forbidden content anywhere in the tree is an error even inside <defs>.
    check_supported(root_);

    double vx = 0, vy = 0, vw = spec_.ref_width, vh = spec_.ref_height;
    if (const auto* vb = root_.attribute("viewBox")) {
      auto nums = NumberStream(*vb).all_numbers();
      if (nums.size() != 4) throw RenderError(Kind::parse, "viewBox needs four numbers");
      vx = nums[0];
      vy = nums[1];
      vw = nums[2];
      vh = nums[3];
      if (vw <= 0 || vh <= 0) return canvas_.take();  // rendering disabled
    } else {
      const auto* w = root_.attribute("width");
      const auto* h = root_.attribute("height");
      if (w && h && !trim(*w).ends_with("%") && !trim(*h).ends_with("%")) {
        vw = parse_length(*w);
        vh = parse_length(*h);
        if (vw <= 0 || vh <= 0) return canvas_.take();
      }
    }
    double scale_x = spec_.ref_width / vw, scale_y = spec_.ref_height / vh;
    Affine view;
    const auto* par = root_.attribute("preserveAspectRatio");
    if (par && trim(*par).starts_with("none")) {
      view = {scale_x, 0, 0, scale_y, -vx * scale_x, -vy * scale_y};
    } else {
      double s = std::min(scale_x, scale_y);
      double ox = (spec_.ref_width - vw * s) / 2, oy = (spec_.ref_height - vh * s) / 2;
      view = {s, 0, 0, s, ox - vx * s, oy - vy * s};
    }
    Style base;
    draw_children(root_, apply_style(root_, base), view, 0);
    return canvas_.take();
  }

 private:
  void index(const xml::Node& n) {
    if (const auto* id = n.attribute("id")) ids_.emplace(*id, &n);
    for (const auto& c : n.children) index(c);
  }

  void check_supported(const xml::Node& n) {
    if (unsupported_elements().contains(n.name)) {
      throw RenderError(Kind::unsupported, "<" + n.name + "> is not supported");
    }
    for (const auto& [k, v] : n.attributes) {
      if ((k == "href" || k == "xlink:href") && !v.starts_with("#")) {
        throw RenderError(Kind::unsupported, "external reference '" + v + "'");
      }
      if (k.starts_with("on")) throw RenderError(Kind::unsupported, "event handler attribute " + k);
    }
    for (const auto& c : n.children) check_supported(c);
  }

  static std::vector<std::pair<std::string, std::string>> declarations(const xml::Node& n) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : n.attributes) out.emplace_back(k, v);
    if (const auto* style = n.attribute("style")) {
      std::string_view s = *style;
      std::size_t start = 0;
      while (start < s.size()) {
        std::size_t semi = s.find(';', start);
        if (semi == std::string_view::npos) semi = s.size();
        std::string_view decl = s.substr(start, semi - start);
        std::size_t colon = decl.find(':');
        if (colon != std::string_view::npos) {
          out.emplace_back(trim(decl.substr(0, colon)), trim(decl.substr(colon + 1)));
        }
        start = semi + 1;
      }
    }
    return out;
  }

  Style apply_style(const xml::Node& n, Style s) const {
    s.opacity = 1;  // opacity is not inherited; groups multiply it in below
    for (const auto& [k, v] : declarations(n)) {
      if (v == "inherit") continue;
      if (k == "fill") {
        if (auto p = parse_paint(v)) s.fill = *p;
      } else if (k == "stroke") {
        if (auto p = parse_paint(v)) s.stroke = *p;
      } else if (k == "color") {
        if (auto c = parse_color(v)) s.current_color = *c;
      } else if (k == "fill-opacity") {
        s.fill_opacity = parse_opacity(v);
      } else if (k == "stroke-opacity") {
        s.stroke_opacity = parse_opacity(v);
      } else if (k == "opacity") {
        s.opacity = parse_opacity(v);
      } else if (k == "stroke-width") {
        s.stroke_width = std::max(0.0, parse_length(v, std::hypot(spec_.ref_width, spec_.ref_height) / std::sqrt(2.0)));
      } else if (k == "fill-rule") {
        s.even_odd = trim(v) == "evenodd";
      } else if (k == "stroke-linecap") {
        std::string c = trim(v);
        s.cap = c == "round" ? Cap::round : c == "square" ? Cap::square : Cap::butt;
      } else if (k == "display") {
        if (trim(v) == "none") s.visible = false;
      } else if (k == "visibility") {
        std::string c = trim(v);
        s.visible = !(c == "hidden" || c == "collapse");
      }
    }
    return s;
  }

  std::optional<Rgb> resolve(const Paint& p, const Style& s, int depth = 0) const {
    switch (p.type) {
      case Paint::Type::none:
        return std::nullopt;
      case Paint::Type::color:
        return p.color;
      case Paint::Type::current:
        return s.current_color;
      case Paint::Type::url: {
        auto it = ids_.find(p.ref);
        if (it == ids_.end() || depth > 8) return std::nullopt;
        const xml::Node& g = *it->second;
        if (g.name != "linearGradient" && g.name != "radialGradient") return std::nullopt;
        Rgb acc{0, 0, 0};
        int stops = 0;
        for (const auto& stop : g.children) {
          if (stop.name != "stop") continue;
          Rgb c{0, 0, 0};
          for (const auto& [k, v] : declarations(stop)) {
            if (k == "stop-color") {
              if (auto col = parse_color(v)) c = *col;
            }
          }
          for (int i = 0; i < 3; ++i) acc[i] += c[i];
          ++stops;
        }
        if (stops == 0) {
          // Gradients may inherit their stops from another gradient.
          const auto* href = g.attribute("href");
          if (!href) href = g.attribute("xlink:href");
          if (href && href->starts_with("#")) {
            Paint chained{Paint::Type::url, {}, href->substr(1)};
            return resolve(chained, s, depth + 1);
          }
          return std::nullopt;
        }
        for (auto& v : acc) v /= stops;
        return acc;
      }
    }
    return std::nullopt;
  }

  double tolerance(const Affine& m) const { return 0.1 / std::max(1e-9, m.scale_estimate()); }

  void paint(const Path& user_path, const Style& s, const Affine& m, double group_opacity) {
    if (!s.visible || user_path.empty()) return;
    auto to_device = [&](const Path& p) {
      Path out = p;
      for (auto& sp : out) {
        for (auto& pt : sp.points) pt = m.apply(pt);
      }
      return out;
    };
    if (auto color = resolve(s.fill, s)) {
      canvas_.fill(to_device(user_path), s.even_odd, *color, s.fill_opacity * group_opacity);
    }
    if (auto color = resolve(s.stroke, s); color && s.stroke_width > 0) {
      canvas_.fill(to_device(stroke_outline(user_path, s.stroke_width, s.cap, tolerance(m))), false, *color,
                   s.stroke_opacity * group_opacity);
    }
  }

  double attr_length(const xml::Node& n, const char* key, double fallback, double reference) const {
    const auto* v = n.attribute(key);
    return v ? parse_length(*v, reference) : fallback;
  }

  void draw_children(const xml::Node& n, const Style& s, const Affine& m, int depth) {
    for (const auto& c : n.children) draw(c, s, m, s.opacity, depth);
  }

  void draw(const xml::Node& n, const Style& parent, const Affine& parent_m, double opacity, int depth) {
    if (depth > 64) throw RenderError(Kind::parse, "element nesting too deep");
    if (non_rendering_elements().contains(n.name)) return;
    Style s = apply_style(n, parent);
    if (!s.visible && n.name != "g") return;
    Affine m = parent_m;
    if (const auto* t = n.attribute("transform")) m = m * parse_transform(*t);
    double alpha = opacity * s.opacity;
    double tol = tolerance(m);
    double ref_w = spec_.ref_width, ref_h = spec_.ref_height;
    double ref_d = std::hypot(ref_w, ref_h) / std::sqrt(2.0);

    const std::string& name = n.name;
    if (name == "g" || name == "a" || name == "svg" || name == "switch") {
      if (!s.visible) return;
      if (name == "svg") {
        m = m * Affine{1, 0, 0, 1, attr_length(n, "x", 0, ref_w), attr_length(n, "y", 0, ref_h)};
      }
      for (const auto& c : n.children) draw(c, s, m, alpha, depth + 1);
      return;
    }
    if (name == "use") {
      const auto* href = n.attribute("href");
      if (!href) href = n.attribute("xlink:href");
      if (!href) return;
      auto it = ids_.find(href->substr(1));
      if (it == ids_.end()) return;
      if (active_uses_.contains(it->second)) throw RenderError(Kind::parse, "recursive <use>");
      Affine shift{1, 0, 0, 1, attr_length(n, "x", 0, ref_w), attr_length(n, "y", 0, ref_h)};
      active_uses_.insert(it->second);
      const xml::Node& target = *it->second;
      if (target.name == "symbol") {
        for (const auto& c : target.children) draw(c, apply_style(target, s), m * shift, alpha, depth + 1);
      } else {
        draw(target, s, m * shift, alpha, depth + 1);
      }
      active_uses_.erase(it->second);
      return;
    }

    Path path;
    if (name == "rect") {
      double x = attr_length(n, "x", 0, ref_w), y = attr_length(n, "y", 0, ref_h);
      double w = attr_length(n, "width", 0, ref_w), h = attr_length(n, "height", 0, ref_h);
      if (w <= 0 || h <= 0) return;
      const auto* rxa = n.attribute("rx");
      const auto* rya = n.attribute("ry");
      double rx = rxa ? parse_length(*rxa, ref_w) : -1, ry = rya ? parse_length(*rya, ref_h) : -1;
      if (rx < 0) rx = ry;
      if (ry < 0) ry = rx;
      rx = std::clamp(rx, 0.0, w / 2);
      ry = std::clamp(ry, 0.0, h / 2);
      if (rx > 0 && ry > 0) {
        PathBuilder b(tol);
        b.move_to({x + rx, y});
        b.line_to({x + w - rx, y});
        b.arc_to(rx, ry, 0, false, true, {x + w, y + ry});
        b.line_to({x + w, y + h - ry});
        b.arc_to(rx, ry, 0, false, true, {x + w - rx, y + h});
        b.line_to({x + rx, y + h});
        b.arc_to(rx, ry, 0, false, true, {x, y + h - ry});
        b.line_to({x, y + ry});
        b.arc_to(rx, ry, 0, false, true, {x + rx, y});
        b.close();
        path = b.finish();
      } else {
        path.push_back({{{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}}, true});
      }
    } else if (name == "circle") {
      double r = attr_length(n, "r", 0, ref_d);
      if (r <= 0) return;
      path.push_back(ellipse_polygon(attr_length(n, "cx", 0, ref_w), attr_length(n, "cy", 0, ref_h), r, r, tol));
    } else if (name == "ellipse") {
      double rx = attr_length(n, "rx", 0, ref_w), ry = attr_length(n, "ry", 0, ref_h);
      if (rx <= 0 || ry <= 0) return;
      path.push_back(ellipse_polygon(attr_length(n, "cx", 0, ref_w), attr_length(n, "cy", 0, ref_h), rx, ry, tol));
    } else if (name == "line") {
      Subpath sp;
      sp.points = {{attr_length(n, "x1", 0, ref_w), attr_length(n, "y1", 0, ref_h)},
                   {attr_length(n, "x2", 0, ref_w), attr_length(n, "y2", 0, ref_h)}};
      path.push_back(std::move(sp));
      Style line_style = s;
      line_style.fill = Paint{};  // lines have no interior
      paint(path, line_style, m, alpha);
      return;
    } else if (name == "polyline" || name == "polygon") {
      const auto* pts = n.attribute("points");
      if (!pts) return;
      auto nums = NumberStream(*pts).all_numbers();
      Subpath sp;
      for (std::size_t i = 0; i + 1 < nums.size(); i += 2) sp.points.push_back({nums[i], nums[i + 1]});
      sp.closed = name == "polygon";
      if (sp.points.size() < 2) return;
      path.push_back(std::move(sp));
    } else if (name == "path") {
      const auto* d = n.attribute("d");
      if (!d) return;
      path = parse_path_data(*d, tol);
    } else {
      return;  // unknown elements are not rendered
    }
    paint(path, s, m, alpha);
  }

  const xml::Node& root_;
  Canvas canvas_;
  RenderSpec spec_;
  std::unordered_map<std::string, const xml::Node*> ids_;
  std::unordered_set<const xml::Node*> active_uses_;
};

}  // namespace

RasterImage SoftwareRenderer::render(const SvgSource& src, const RenderSpec& spec) const {
  spec.validate();
  xml::Node root = xml::parse(src.text);
  return DocumentRenderer(root, spec, subsamples_).run();
}

const Renderer& default_renderer() {
  static const SoftwareRenderer renderer;
  return renderer;
}

RasterImage render_svg(const SvgSource& src, const RenderSpec& spec) { return default_renderer().render(src, spec); }

}  // namespace rlrf
