#include "pda/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pda/align.hpp"
#include "pda/core.hpp"

namespace pda {

FeatureVector project_and_normalize(const FeatureVector& f, const Matrix& projection) {
  return l2_normalize(matvec(projection, l2_normalize(f)));
}

ClassScores best_of_k(const FeatureVector& z, const PrototypeMemory& memory) {
  if (z.size() != memory.dim()) throw DimensionMismatch("best_of_k: feature dim");
  ClassScores scores;
  scores.values.resize(memory.num_classes());
  scores.best_slot.resize(memory.num_classes());
  for (std::size_t c = 0; c < memory.num_classes(); ++c) {
    double best = -2.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < memory.slots_per_class(); ++k) {
      const double s = cosine(z, memory.slot(c, k));
      if (s > best) {
        best = s;
        best_k = k;
      }
    }
    scores.values[c] = best;
    scores.best_slot[c] = best_k;
  }
  return scores;
}

SlotRef select_global_best(const FeatureVector& z0, const PrototypeMemory& memory) {
  if (z0.size() != memory.dim()) throw DimensionMismatch("select_global_best: feature dim");
  SlotRef best{0, 0};
  double best_score = -2.0;
  for (std::size_t c = 0; c < memory.num_classes(); ++c) {
    for (std::size_t k = 0; k < memory.slots_per_class(); ++k) {
      const double s = cosine(z0, memory.slot(c, k));
      if (s > best_score) {
        best_score = s;
        best = {c, k};
      }
    }
  }
  return best;
}

LogitVector pda_logits(const ClassScores& scores, const PdaParams& params) {
  if (!(params.temperature > 0.0)) {
    throw NonPositiveTemperature("pda_logits: temperature " +
                                 std::to_string(params.temperature));
  }
  const double sigma = std::exp(params.log_scale);
  LogitVector logits(scores.values.size() + 1);
  for (std::size_t c = 0; c < scores.values.size(); ++c) {
    logits[c] = sigma * scores.values[c] / params.temperature;
  }
  logits.back() = sigma * params.bg_bias;
  return logits;
}

LogitVector fuse(const LogitVector& z_pda, const LogitVector& z_cls, const LogitVector* z_pcb,
                 const FusionWeights& weights) {
  if (z_pda.size() != z_cls.size()) throw DimensionMismatch("fuse: pda vs cls length");
  if (z_pcb != nullptr && z_pcb->size() != z_pda.size()) {
    throw DimensionMismatch("fuse: pcb length");
  }
  const double gamma = z_pcb == nullptr ? 0.0 : weights.gamma;
  LogitVector fused(z_pda.size());
  for (std::size_t i = 0; i < fused.size(); ++i) {
    fused[i] = weights.alpha * z_pda[i] + weights.beta * z_cls[i] +
               (z_pcb == nullptr ? 0.0 : gamma * (*z_pcb)[i]);
  }
  return fused;
}

std::vector<double> softmax(const LogitVector& z) {
  const double max_logit = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - max_logit);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

ScoreResult forward_roi(const FeatureVector& f, const RoiFeatureMap& fmap,
                        const PrototypeMemory& memory, const PdaParams& params,
                        const AlignerParams* aligner, const LogitVector& z_cls,
                        const LogitVector* z_pcb) {
  if (z_cls.size() != memory.num_classes() + 1) {
    throw DimensionMismatch("forward_roi: z_cls length " + std::to_string(z_cls.size()) +
                            " vs C+1 = " + std::to_string(memory.num_classes() + 1));
  }
  const FeatureVector z0 = project_and_normalize(f, params.projection);
  const SlotRef global_best = select_global_best(z0, memory);

  ClassScores scores;
  if (params.use_align) {
    if (aligner == nullptr) throw ConfigInvalid("forward_roi: use_align without aligner");
    scores = aligned_class_scores(fmap, z0, memory, params, *aligner, global_best);
  } else {
    scores = best_of_k(z0, memory);
  }

  ScoreResult result;
  result.diagnostics.global_best = global_best;
  result.diagnostics.scores = scores;
  result.diagnostics.pda = pda_logits(scores, params);
  result.diagnostics.cls = z_cls;
  result.diagnostics.pcb = z_pcb != nullptr ? *z_pcb : LogitVector(z_cls.size(), 0.0);
  result.diagnostics.fused = fuse(result.diagnostics.pda, z_cls, z_pcb, params.fusion);
  result.probabilities = softmax(result.diagnostics.fused);
  result.scores = std::move(scores);
  return result;
}

ScoreResult score_roi(const FeatureVector& f, const RoiFeatureMap& fmap,
                      const PrototypeMemory& memory, const PdaParams& params,
                      const AlignerParams* aligner, const LogitVector& z_cls,
                      const LogitVector* z_pcb) {
  if (!memory.frozen()) throw MemoryNotFrozen("score_roi: memory must be frozen at inference");
  return forward_roi(f, fmap, memory, params, aligner, z_cls, z_pcb);
}

}  // namespace pda
