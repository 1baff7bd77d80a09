#include "pda/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pda {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("dot: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

FeatureVector l2_normalize(const FeatureVector& v) {
  const double norm = l2_norm(v);
  if (norm < kDegenerateNormThreshold) {
    throw DegenerateVector("l2_normalize: norm " + std::to_string(norm));
  }
  FeatureVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  return std::clamp(dot(a, b), -1.0, 1.0);
}

FeatureVector global_average_pool(const RoiFeatureMap& fmap) {
  const std::size_t cells = fmap.height() * fmap.width();
  FeatureVector out(fmap.channels(), 0.0);
  const auto& data = fmap.data();
  for (std::size_t c = 0; c < fmap.channels(); ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cells; ++i) acc += data[c * cells + i];
    out[c] = acc / static_cast<double>(cells);
  }
  return out;
}

}  // namespace pda
