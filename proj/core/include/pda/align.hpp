#pragma once

#include <vector>

#include "pda/scoring.hpp"
#include "pda/types.hpp"

namespace pda {

// Per-cell 2D offsets in cell units, bounded by |dx|,|dy| <= bound.
struct OffsetField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> dx;  // row-major H x W
  std::vector<double> dy;
  double bound = 1.0;
};

// Single linear map from concat(GAP(F), prototype) to a 2 x H x W offset
// field, zero-initialized so the warp starts as the identity.
struct AlignerParams {
  std::size_t feat_channels = 0;
  std::size_t proto_dim = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> weight;  // (feat_channels+proto_dim) x (2*height*width), row-major

  static AlignerParams zeros(std::size_t feat_channels, std::size_t proto_dim,
                             std::size_t height, std::size_t width);

  std::size_t input_dim() const { return feat_channels + proto_dim; }
  std::size_t output_dim() const { return 2 * height * width; }
};

inline constexpr double kDefaultOffsetBound = 1.0;

// raw = weight^T * concat(GAP(F), prototype); offsets = bound * tanh(raw).
// Row-major plane 0 of raw is dx, plane 1 is dy.
OffsetField predict_offsets(const RoiFeatureMap& fmap, const FeatureVector& prototype,
                            const AlignerParams& aligner, double bound = kDefaultOffsetBound);

// Bilinear warp: output(c,y,x) samples F at (y+dy, x+dx) with source
// coordinates clamped to the border. Exact for in-range integer offsets.
RoiFeatureMap grid_sample(const RoiFeatureMap& fmap, const OffsetField& offsets);

// Warp with the globally selected prototype, re-pool, re-project with the
// shared W, and score every class best-of-K against the aligned vector.
// When params.align_per_class is set, each class is scored after its own warp
// conditioned on that class's best prototype under z0.
ClassScores aligned_class_scores(const RoiFeatureMap& fmap, const FeatureVector& z0,
                                 const PrototypeMemory& memory, const PdaParams& params,
                                 const AlignerParams& aligner, SlotRef global_best);

}  // namespace pda
