#pragma once

#include <span>

#include "wmforge/kernels.hpp"
#include "wmforge/types.hpp"

namespace wmforge {

struct DetectorConfig {
  double z_star = 4.0;
  double gamma = 0.25;
};

struct DetectionResult {
  long green_count = 0;
  double z_score = 0.0;
  bool is_watermarked = false;
  double threshold_g = 0.0;
};

/// G(S) = sum_j s_j c_j over a sparse count vector.
long green_count(std::span<const SparseCount> counts, const ColorCode& color);
/// Dense variant; `counts` must have one entry per vocabulary token.
long green_count(std::span<const long> counts, const ColorCode& color);

/// (G - gamma l) / sqrt(l gamma (1 - gamma)).
double z_score(double green, long length, double gamma);

/// g = z* sqrt(l gamma (1 - gamma)) + gamma l: the green count a sentence
/// must exceed to be flagged.
double watermark_threshold(long length, double gamma, double z_star);

/// Flags when z > z* (strict).
DetectionResult detect(std::span<const SparseCount> counts, long length, const ColorCode& color,
                       const DetectorConfig& config);

}  // namespace wmforge
