#pragma once

// Seeded random pipeline instances shared by the unit and acceptance suites.
// Generation uses the library Rng; the checks they feed stay independent.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "alg2_oracle.hpp"
#include "pda/align.hpp"
#include "pda/core.hpp"
#include "pda/rng.hpp"
#include "pda/scoring.hpp"
#include "pda/train.hpp"
#include "pda/types.hpp"

namespace testsup {

struct Instance {
  pda::PrototypeMemory memory;
  pda::PdaParams params;
  pda::AlignerParams aligner;
  pda::LabeledBatch batch;
};

inline pda::PrototypeMemory random_memory(pda::Rng& rng, std::size_t classes, std::size_t slots,
                                          std::size_t dim, bool frozen = true) {
  std::vector<double> values;
  values.reserve(classes * slots * dim);
  for (std::size_t i = 0; i < classes * slots; ++i) {
    const pda::FeatureVector v = rng.unit_vector(dim);
    values.insert(values.end(), v.begin(), v.end());
  }
  return pda::PrototypeMemory(classes, slots, dim, std::move(values), frozen);
}

inline Instance make_instance(std::uint64_t seed, bool use_align, bool per_class,
                              std::size_t items = 2, bool with_background = true) {
  pda::Rng rng(seed);
  const std::size_t classes = 2 + rng.index(4);  // 2..5
  const std::size_t slots = 1 + rng.index(3);    // 1..3
  const std::size_t dim = 4 + rng.index(13);     // 4..16
  const std::size_t height = 2 + rng.index(4);   // 2..5
  const std::size_t width = 2 + rng.index(4);
  const std::size_t channels = dim;  // the shared projection re-projects pooled maps

  pda::PdaParams params = pda::PdaParams::identity(dim);
  for (auto& w : params.projection.data) w += 0.3 * rng.gaussian();
  params.log_scale = rng.uniform(-0.5, 0.5);
  params.bg_bias = rng.uniform(-1.0, 1.0);
  params.temperature = rng.uniform(0.1, 1.0);
  params.fusion = {rng.uniform(0.05, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
  params.use_align = use_align;
  params.align_per_class = per_class;

  pda::AlignerParams aligner = pda::AlignerParams::zeros(channels, dim, height, width);
  for (auto& w : aligner.weight) w = 0.25 * rng.gaussian();

  pda::LabeledBatch batch;
  for (std::size_t i = 0; i < items; ++i) {
    pda::FeatureVector feature(dim);
    for (auto& x : feature) x = rng.gaussian();
    std::vector<double> cells(channels * height * width);
    for (auto& x : cells) x = rng.gaussian();
    pda::LogitVector z_cls(classes + 1);
    for (auto& x : z_cls) x = 2.0 * rng.gaussian();
    std::optional<pda::LogitVector> z_pcb;
    if (rng.index(2) == 1) {
      pda::LogitVector pcb(classes + 1);
      for (auto& x : pcb) x = rng.gaussian();
      z_pcb = std::move(pcb);
    }
    const std::size_t max_class = with_background ? classes + 1 : classes;
    batch.push_back(pda::LabeledItem{std::move(feature),
                                     pda::RoiFeatureMap(channels, height, width,
                                                        std::move(cells)),
                                     rng.index(max_class), std::move(z_cls),
                                     std::move(z_pcb)});
  }
  return Instance{random_memory(rng, classes, slots, dim), std::move(params),
                  std::move(aligner), std::move(batch)};
}

// Smallest gap protecting a discrete choice (argmax winner or a bilinear /
// clamp kink) in the instance's forward pass. Finite-difference checks skip
// instances whose margin could be crossed by the probe step.
inline double min_margin(const Instance& inst) {
  double margin = std::numeric_limits<double>::infinity();
  const auto& memory = inst.memory;

  const auto slot_gaps = [&](const pda::FeatureVector& z) {
    double global_top1 = -2.0, global_top2 = -2.0;
    for (std::size_t c = 0; c < memory.num_classes(); ++c) {
      double top1 = -2.0, top2 = -2.0;
      for (std::size_t k = 0; k < memory.slots_per_class(); ++k) {
        const double s = pda::cosine(z, memory.slot(c, k));
        if (s > top1) {
          top2 = top1;
          top1 = s;
        } else if (s > top2) {
          top2 = s;
        }
      }
      if (memory.slots_per_class() > 1) margin = std::min(margin, top1 - top2);
      if (top1 > global_top1) {
        global_top2 = global_top1;
        global_top1 = top1;
      } else if (top1 > global_top2) {
        global_top2 = top1;
      }
    }
    if (memory.num_classes() * memory.slots_per_class() > 1) {
      margin = std::min(margin, global_top1 - global_top2);
    }
  };

  const auto offset_margins = [&](const pda::OffsetField& offsets) {
    for (std::size_t y = 0; y < offsets.height; ++y) {
      for (std::size_t x = 0; x < offsets.width; ++x) {
        const std::size_t j = y * offsets.width + x;
        const double sy = static_cast<double>(y) + offsets.dy[j];
        const double sx = static_cast<double>(x) + offsets.dx[j];
        margin = std::min(margin, std::abs(sy - std::round(sy)));
        margin = std::min(margin, std::abs(sx - std::round(sx)));
      }
    }
  };

  for (const auto& item : inst.batch) {
    const pda::FeatureVector z0 =
        pda::project_and_normalize(item.feature, inst.params.projection);
    slot_gaps(z0);
    if (!inst.params.use_align) continue;

    std::vector<pda::SlotRef> warp_protos;
    if (!inst.params.align_per_class) {
      warp_protos.push_back(pda::select_global_best(z0, memory));
    } else {
      const pda::ClassScores base = pda::best_of_k(z0, memory);
      for (std::size_t c = 0; c < memory.num_classes(); ++c) {
        warp_protos.push_back({c, base.best_slot[c]});
      }
    }
    for (const auto& ref : warp_protos) {
      const auto slot = memory.slot(ref.class_id, ref.slot);
      const pda::OffsetField offsets = pda::predict_offsets(
          item.fmap, pda::FeatureVector(slot.begin(), slot.end()), inst.aligner);
      offset_margins(offsets);
      const pda::RoiFeatureMap warped = pda::grid_sample(item.fmap, offsets);
      const pda::FeatureVector aligned = pda::project_and_normalize(
          pda::global_average_pool(warped), inst.params.projection);
      slot_gaps(aligned);
    }
  }
  return margin;
}

inline oracle::Alg2Input to_oracle(const Instance& inst, std::size_t item_index) {
  const auto& item = inst.batch.at(item_index);
  oracle::Alg2Input in;
  in.num_classes = inst.memory.num_classes();
  in.slots = inst.memory.slots_per_class();
  in.dim = inst.memory.dim();
  in.prototypes = inst.memory.raw();
  in.channels = item.fmap.channels();
  in.height = item.fmap.height();
  in.width = item.fmap.width();
  in.fmap = item.fmap.data();
  in.feature = item.feature;
  in.projection = inst.params.projection.data;
  in.log_scale = inst.params.log_scale;
  in.bg_bias = inst.params.bg_bias;
  in.tau = inst.params.temperature;
  in.alpha = inst.params.fusion.alpha;
  in.beta = inst.params.fusion.beta;
  in.gamma = inst.params.fusion.gamma;
  in.z_cls = item.z_cls;
  if (item.z_pcb.has_value()) in.z_pcb = item.z_pcb.value();
  in.use_align = inst.params.use_align;
  in.align_per_class = inst.params.align_per_class;
  in.aligner_weight = inst.aligner.weight;
  return in;
}

}  // namespace testsup
