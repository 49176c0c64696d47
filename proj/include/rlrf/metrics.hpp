#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rlrf/image.hpp"

namespace rlrf {

// Mean squared difference over all pixels and channels of [0, 1] images, times 100.
// Throws DimensionMismatch.
double mse(const RasterImage& a, const RasterImage& b);

// Mean structural similarity on luma with an 11x11 Gaussian window
// (sigma 1.5, reflect-101 borders), K1 = 0.01, K2 = 0.03, unit range.
// Throws DimensionMismatch.
double ssim(const RasterImage& a, const RasterImage& b);

// Mean of (gt - pred); positive when predictions are shorter. Throws LengthMismatch.
double code_efficiency(std::span<const std::size_t> gt_lengths, std::span<const std::size_t> pred_lengths);

// Index of the candidate with the lowest mse against target; ties keep the
// lowest index. Throws std::invalid_argument on an empty list.
std::size_t best_of_n(std::span<const RasterImage> candidates, const RasterImage& target);

}  // namespace rlrf
