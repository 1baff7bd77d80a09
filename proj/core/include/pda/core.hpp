#pragma once

#include <span>

#include "pda/types.hpp"

namespace pda {

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Scales v to unit L2 norm. Throws DegenerateVector if the norm < 1e-12.
FeatureVector l2_normalize(const FeatureVector& v);

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);

// Per-channel mean over the H*W cells.
FeatureVector global_average_pool(const RoiFeatureMap& fmap);

inline constexpr double kDegenerateNormThreshold = 1e-12;

}  // namespace pda
