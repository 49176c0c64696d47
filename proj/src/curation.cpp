#include "rlrf/curation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "rlrf/error.hpp"

namespace rlrf::curation {

double color_entropy(const RasterImage& img, int bins) {
  if (bins < 2) throw ConfigError("color_entropy: bins must be >= 2");
  if (img.empty()) return 0.0;
  std::map<std::uint64_t, std::size_t> hist;
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      std::uint64_t key = 0;
      for (int c = 0; c < ch; ++c) {
        const int q = std::clamp(static_cast<int>(std::floor(img.at(x, y, c) * bins)), 0, bins - 1);
        key = key * static_cast<std::uint64_t>(bins) + static_cast<std::uint64_t>(q);
      }
      ++hist[key];
    }
  }
  const double n = static_cast<double>(img.width()) * img.height();
  double h = 0;
  for (const auto& [_, count] : hist) {
    const double p = static_cast<double>(count) / n;
    h -= p * std::log2(p);
  }
  return h;
}

bool is_blank(const RasterImage& img, double threshold) {
  if (!(threshold > 0 && threshold <= 1)) throw ConfigError("is_blank: threshold must be in (0, 1]");
  if (img.empty()) return true;
  constexpr double tol = 2.0 / 255.0;
  std::size_t white = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      bool w = true;
      for (int c = 0; c < img.channels(); ++c) w = w && img.at(x, y, c) >= 1.0 - tol;
      white += w;
    }
  }
  return static_cast<double>(white) >= threshold * img.width() * img.height();
}

void Criteria::validate() const {
  if (entropy_bins < 2) throw ConfigError("curation.entropy_bins must be >= 2");
  if (!(blank_threshold > 0 && blank_threshold <= 1)) throw ConfigError("curation.blank_threshold must be in (0, 1]");
  if (min_entropy_bits < 0) throw ConfigError("curation.min_entropy_bits must be >= 0");
  if (render_size < 8) throw ConfigError("curation.render_size must be >= 8");
}

Criteria Criteria::from_json(const nlohmann::json& j) { return from_json(j, Criteria{}); }

Criteria Criteria::from_json(const nlohmann::json& j, Criteria c) {
  if (!j.is_object()) throw ConfigError("curation section must be an object");
  const nlohmann::json known = Criteria{}.to_json();
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("unknown key curation." + item.key());
  }
  try {
    c.min_tokens = j.value("min_tokens", c.min_tokens);
    c.min_entropy_bits = j.value("min_entropy_bits", c.min_entropy_bits);
    c.entropy_bins = j.value("entropy_bins", c.entropy_bins);
    c.blank_threshold = j.value("blank_threshold", c.blank_threshold);
    c.render_size = j.value("render_size", c.render_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("curation section: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json Criteria::to_json() const {
  return {{"min_tokens", min_tokens},
          {"min_entropy_bits", min_entropy_bits},
          {"entropy_bins", entropy_bins},
          {"blank_threshold", blank_threshold},
          {"render_size", render_size}};
}

nlohmann::json FilterReport::to_json() const {
  return {{"input", input},   {"retained", retained},       {"broken", broken},
          {"blank", blank},   {"low_entropy", low_entropy}, {"too_short", too_short}};
}

FilterResult filter_dataset(std::span<const Record> records, const Criteria& criteria, const Renderer& renderer) {
  criteria.validate();
  FilterResult out;
  out.report.input = records.size();
  RenderSpec spec;
  spec.ref_width = spec.ref_height = criteria.render_size;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto clean = sanitize_svg(r.svg).first;
    RasterImage rendered;
    try {
      rendered = renderer.render(clean, spec);
    } catch (const RenderError&) {
      ++out.report.broken;
      continue;
    }
    const RasterImage& img = r.image ? *r.image : rendered;
    if (is_blank(img, criteria.blank_threshold)) {
      ++out.report.blank;
    } else if (color_entropy(img, criteria.entropy_bins) < criteria.min_entropy_bits) {
      ++out.report.low_entropy;
    } else if (token_length(lex_svg(clean)) < criteria.min_tokens) {
      ++out.report.too_short;
    } else {
      out.retained.push_back(i);
      out.images.push_back(img);
    }
  }
  out.report.retained = out.retained.size();
  return out;
}

std::vector<double> cluster_features(const RasterImage& img) {
  std::vector<double> f(65, 0.0);
  if (img.empty()) return f;
  const RasterImage rgb = img.channels() == 3 ? img : replicate_channels(img);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      int key = 0;
      for (int c = 0; c < 3; ++c) key = key * 4 + std::clamp(static_cast<int>(rgb.at(x, y, c) * 4), 0, 3);
      f[static_cast<std::size_t>(key)] += 1.0;
    }
  }
  const double n = static_cast<double>(rgb.width()) * rgb.height();
  for (int i = 0; i < 64; ++i) f[i] /= n;
  f[64] = static_cast<double>(rgb.width()) / rgb.height();
  return f;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

std::vector<int> kmeans(std::span<const std::vector<double>> rows, int clusters, std::uint64_t seed,
                        int max_iterations) {
  if (clusters < 1) throw ConfigError("kmeans: cluster count must be >= 1");
  const std::size_t n = rows.size();
  std::vector<int> labels(n, 0);
  if (n == 0 || clusters == 1) return labels;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(clusters), n);
  std::mt19937_64 rng(seed);

  std::vector<std::vector<double>> centers;
  centers.push_back(rows[rng() % n]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(rows[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = rng() % n;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(rows[pick]);
  }

  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(rows[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      if (labels[i] != best) changed = true;
      labels[i] = best;
    }
    if (!changed && it > 0) break;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> sum(rows[0].size(), 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != static_cast<int>(c)) continue;
        for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += rows[i][d];
        ++count;
      }
      if (count == 0) continue;  // keep an empty cluster's previous center
      for (double& v : sum) v /= static_cast<double>(count);
      centers[c] = std::move(sum);
    }
  }
  return labels;
}

std::vector<std::size_t> proportional_allocation(std::span<const std::size_t> sizes, std::size_t k) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (k > n) throw InsufficientRecords("cannot allocate " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<std::size_t> alloc(sizes.size(), 0);
  if (n == 0) return alloc;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double exact = static_cast<double>(k) * sizes[i] / static_cast<double>(n);
    alloc[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += alloc[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < k; j = (j + 1) % remainders.size()) {
    const std::size_t i = remainders[j].second;
    if (alloc[i] < sizes[i]) {
      ++alloc[i];
      ++assigned;
    }
  }
  return alloc;
}

std::vector<std::size_t> stratified_sample(std::span<const RasterImage> images, std::size_t k, int cluster_count,
                                           std::uint64_t seed) {
  if (k > images.size()) {
    throw InsufficientRecords("requested " + std::to_string(k) + " records from " + std::to_string(images.size()));
  }
  if (cluster_count < 1) throw ConfigError("stratified_sample: cluster_count must be >= 1");
  std::vector<std::vector<double>> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back(cluster_features(img));
  const auto labels = kmeans(rows, cluster_count, seed);

  const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(clusters));
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  std::vector<std::size_t> sizes;
  for (const auto& m : members) sizes.push_back(m.size());
  const auto alloc = proportional_allocation(sizes, k);

  std::mt19937_64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto m = members[c];
    std::shuffle(m.begin(), m.end(), rng);
    out.insert(out.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(alloc[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace rlrf::curation
