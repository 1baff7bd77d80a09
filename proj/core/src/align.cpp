#include "pda/align.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pda/core.hpp"

namespace pda {

AlignerParams AlignerParams::zeros(std::size_t feat_channels, std::size_t proto_dim,
                                   std::size_t height, std::size_t width) {
  AlignerParams a;
  a.feat_channels = feat_channels;
  a.proto_dim = proto_dim;
  a.height = height;
  a.width = width;
  a.weight.assign(a.input_dim() * a.output_dim(), 0.0);
  return a;
}

OffsetField predict_offsets(const RoiFeatureMap& fmap, const FeatureVector& prototype,
                            const AlignerParams& aligner, double bound) {
  if (fmap.channels() != aligner.feat_channels || fmap.height() != aligner.height ||
      fmap.width() != aligner.width) {
    throw DimensionMismatch("predict_offsets: map does not match aligner dims");
  }
  if (prototype.size() != aligner.proto_dim) {
    throw DimensionMismatch("predict_offsets: prototype dim " +
                            std::to_string(prototype.size()));
  }
  FeatureVector input = global_average_pool(fmap);
  input.insert(input.end(), prototype.begin(), prototype.end());

  const std::size_t cells = aligner.height * aligner.width;
  std::vector<double> raw(2 * cells, 0.0);
  // raw = weight^T * input, weight row-major (input_dim x output_dim)
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double xi = input[i];
    if (xi == 0.0) continue;
    const double* row = aligner.weight.data() + i * raw.size();
    for (std::size_t j = 0; j < raw.size(); ++j) raw[j] += xi * row[j];
  }

  OffsetField field;
  field.height = aligner.height;
  field.width = aligner.width;
  field.bound = bound;
  field.dx.resize(cells);
  field.dy.resize(cells);
  for (std::size_t j = 0; j < cells; ++j) {
    field.dx[j] = bound * std::tanh(raw[j]);
    field.dy[j] = bound * std::tanh(raw[cells + j]);
  }
  return field;
}

namespace {

// Bilinear lookup with the source coordinate clamped to the border.
double sample_channel(const RoiFeatureMap& fmap, std::size_t c, double sy, double sx) {
  const double max_y = static_cast<double>(fmap.height() - 1);
  const double max_x = static_cast<double>(fmap.width() - 1);
  sy = std::clamp(sy, 0.0, max_y);
  sx = std::clamp(sx, 0.0, max_x);
  const std::size_t y0 = static_cast<std::size_t>(sy);
  const std::size_t x0 = static_cast<std::size_t>(sx);
  const std::size_t y1 = std::min(y0 + 1, fmap.height() - 1);
  const std::size_t x1 = std::min(x0 + 1, fmap.width() - 1);
  const double fy = sy - static_cast<double>(y0);
  const double fx = sx - static_cast<double>(x0);
  const double top = (1.0 - fx) * fmap.at(c, y0, x0) + fx * fmap.at(c, y0, x1);
  const double bottom = (1.0 - fx) * fmap.at(c, y1, x0) + fx * fmap.at(c, y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace

RoiFeatureMap grid_sample(const RoiFeatureMap& fmap, const OffsetField& offsets) {
  if (offsets.height != fmap.height() || offsets.width != fmap.width()) {
    throw DimensionMismatch("grid_sample: offset grid does not match the map");
  }
  RoiFeatureMap out(fmap.channels(), fmap.height(), fmap.width());
  for (std::size_t c = 0; c < fmap.channels(); ++c) {
    for (std::size_t y = 0; y < fmap.height(); ++y) {
      for (std::size_t x = 0; x < fmap.width(); ++x) {
        const std::size_t j = y * fmap.width() + x;
        const double sy = static_cast<double>(y) + offsets.dy[j];
        const double sx = static_cast<double>(x) + offsets.dx[j];
        out.at(c, y, x) = sample_channel(fmap, c, sy, sx);
      }
    }
  }
  return out;
}

namespace {

ClassScores scores_after_warp(const RoiFeatureMap& fmap, const FeatureVector& prototype,
                              const PrototypeMemory& memory, const PdaParams& params,
                              const AlignerParams& aligner) {
  const OffsetField offsets = predict_offsets(fmap, prototype, aligner);
  const RoiFeatureMap warped = grid_sample(fmap, offsets);
  const FeatureVector pooled = global_average_pool(warped);
  const FeatureVector aligned = project_and_normalize(pooled, params.projection);
  return best_of_k(aligned, memory);
}

}  // namespace

ClassScores aligned_class_scores(const RoiFeatureMap& fmap, const FeatureVector& z0,
                                 const PrototypeMemory& memory, const PdaParams& params,
                                 const AlignerParams& aligner, SlotRef global_best) {
  if (!params.align_per_class) {
    const FeatureVector proto(memory.slot(global_best.class_id, global_best.slot).begin(),
                              memory.slot(global_best.class_id, global_best.slot).end());
    return scores_after_warp(fmap, proto, memory, params, aligner);
  }

  // One warp per class, conditioned on that class's best prototype under z0.
  const ClassScores base = best_of_k(z0, memory);
  ClassScores scores;
  scores.values.resize(memory.num_classes());
  scores.best_slot.resize(memory.num_classes());
  for (std::size_t c = 0; c < memory.num_classes(); ++c) {
    const auto star = memory.slot(c, base.best_slot[c]);
    const FeatureVector proto(star.begin(), star.end());
    const ClassScores warped = scores_after_warp(fmap, proto, memory, params, aligner);
    scores.values[c] = warped.values[c];
    scores.best_slot[c] = warped.best_slot[c];
  }
  return scores;
}

}  // namespace pda
