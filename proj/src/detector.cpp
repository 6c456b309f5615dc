#include "wmforge/detector.hpp"

#include <cmath>

#include "wmforge/errors.hpp"

namespace wmforge {

namespace {
void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie strictly between 0 and 1");
}
}  // namespace

long green_count(std::span<const SparseCount> counts, const ColorCode& color) {
  long g = 0;
  for (const auto& [tok, n] : counts) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= color.size()) {
      throw InputError("token id outside the color code");
    }
    if (color[static_cast<std::size_t>(tok)]) g += n;
  }
  return g;
}

long green_count(std::span<const long> counts, const ColorCode& color) {
  if (counts.size() != color.size()) throw InputError("count vector length differs from vocabulary size");
  long g = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) g += color[j] ? counts[j] : 0;
  return g;
}

double z_score(double green, long length, double gamma) {
  if (length < 1) throw InputError("z_score: sentence length must be >= 1");
  check_gamma(gamma);
  const double l = static_cast<double>(length);
  return (green - gamma * l) / std::sqrt(l * gamma * (1.0 - gamma));
}

double watermark_threshold(long length, double gamma, double z_star) {
  if (length < 1) throw InputError("watermark_threshold: sentence length must be >= 1");
  check_gamma(gamma);
  const double l = static_cast<double>(length);
  return z_star * std::sqrt(l * gamma * (1.0 - gamma)) + gamma * l;
}

DetectionResult detect(std::span<const SparseCount> counts, long length, const ColorCode& color,
                       const DetectorConfig& config) {
  if (!(config.z_star > 0.0)) throw ConfigError("z_star must be positive");
  DetectionResult r;
  r.green_count = green_count(counts, color);
  r.z_score = z_score(static_cast<double>(r.green_count), length, config.gamma);
  r.threshold_g = watermark_threshold(length, config.gamma, config.z_star);
  r.is_watermarked = r.z_score > config.z_star;
  return r;
}

}  // namespace wmforge
