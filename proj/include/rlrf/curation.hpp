#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlrf/image.hpp"
#include "rlrf/raster.hpp"
#include "rlrf/svg.hpp"

namespace rlrf::curation {

// Shannon entropy in bits of the color histogram with `bins` levels per channel.
double color_entropy(const RasterImage& img, int bins = 8);

// True when at least `threshold` of the pixels are within 2/255 of white in every channel.
bool is_blank(const RasterImage& img, double threshold = 0.98);

struct Criteria {
  std::size_t min_tokens = 500;  // lexer tokens of the sanitized SVG
  double min_entropy_bits = 1.0;
  int entropy_bins = 8;
  double blank_threshold = 0.98;
  int render_size = 128;  // raster used for checks when a record has no image

  void validate() const;
  static Criteria from_json(const nlohmann::json& j);
  static Criteria from_json(const nlohmann::json& j, Criteria base);
  nlohmann::json to_json() const;
};

struct Record {
  std::string id;
  SvgSource svg;
  std::optional<RasterImage> image;
};

// Rejection counts; a record is counted under the first rule it fails, in
// the order broken, blank, low_entropy, too_short.
struct FilterReport {
  std::size_t input = 0;
  std::size_t retained = 0;
  std::size_t broken = 0;
  std::size_t blank = 0;
  std::size_t low_entropy = 0;
  std::size_t too_short = 0;

  nlohmann::json to_json() const;
};

struct FilterResult {
  std::vector<std::size_t> retained;  // indices into the input, ascending
  std::vector<RasterImage> images;    // raster used for each retained record
  FilterReport report;
};

FilterResult filter_dataset(std::span<const Record> records, const Criteria& criteria,
                            const Renderer& renderer = default_renderer());

// 64-bin color histogram (4 levels per channel) followed by width / height.
std::vector<double> cluster_features(const RasterImage& img);

// Seeded k-means++ (Lloyd iterations) over feature rows; returns a label per row.
std::vector<int> kmeans(std::span<const std::vector<double>> rows, int clusters, std::uint64_t seed,
                        int max_iterations = 100);

// Chooses k of the images, allocating to k-means clusters of cluster_features
// in proportion to cluster size (largest remainder) and sampling uniformly
// inside each cluster. Returns ascending indices. Throws InsufficientRecords.
std::vector<std::size_t> stratified_sample(std::span<const RasterImage> images, std::size_t k, int cluster_count,
                                           std::uint64_t seed);

// Largest-remainder apportionment of k over groups of the given sizes.
std::vector<std::size_t> proportional_allocation(std::span<const std::size_t> sizes, std::size_t k);

}  // namespace rlrf::curation
