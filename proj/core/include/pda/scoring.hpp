#pragma once

#include <vector>

#include "pda/types.hpp"

namespace pda {

struct AlignerParams;

// Best-of-K cosine per class plus the winning slot index.
struct ClassScores {
  std::vector<double> values;           // s_c in [-1, 1], length C
  std::vector<std::size_t> best_slot;   // argmax slot per class, lowest index on ties
};

struct SlotRef {
  std::size_t class_id;
  std::size_t slot;
};

// normalize -> multiply by the projection -> normalize again.
FeatureVector project_and_normalize(const FeatureVector& f, const Matrix& projection);

ClassScores best_of_k(const FeatureVector& z, const PrototypeMemory& memory);

// Global argmax over all C*K slots; ties to lowest class, then lowest slot.
SlotRef select_global_best(const FeatureVector& z0, const PrototypeMemory& memory);

// [sigma*s_1/tau, ..., sigma*s_C/tau, sigma*bg_bias].
LogitVector pda_logits(const ClassScores& scores, const PdaParams& params);

// alpha*z_pda + beta*z_cls + gamma*z_pcb. A null z_pcb forces gamma to 0.
LogitVector fuse(const LogitVector& z_pda, const LogitVector& z_cls, const LogitVector* z_pcb,
                 const FusionWeights& weights);

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(const LogitVector& z);

struct ScoreDiagnostics {
  SlotRef global_best;
  ClassScores scores;      // the s vector that produced the logits
  LogitVector pda;
  LogitVector cls;
  LogitVector pcb;         // zeros when absent
  LogitVector fused;
};

struct ScoreResult {
  std::vector<double> probabilities;  // length C+1
  ClassScores scores;
  ScoreDiagnostics diagnostics;
};

// Full inference pipeline: project, select the global best prototype, align
// (when params.use_align; aligner must then be non-null), re-pool and
// re-project, best-of-K, logits, fusion, softmax. The training path; does not
// require a frozen memory.
ScoreResult forward_roi(const FeatureVector& f, const RoiFeatureMap& fmap,
                        const PrototypeMemory& memory, const PdaParams& params,
                        const AlignerParams* aligner, const LogitVector& z_cls,
                        const LogitVector* z_pcb);

// Inference entry point. Throws MemoryNotFrozen unless the memory is frozen.
ScoreResult score_roi(const FeatureVector& f, const RoiFeatureMap& fmap,
                      const PrototypeMemory& memory, const PdaParams& params,
                      const AlignerParams* aligner, const LogitVector& z_cls,
                      const LogitVector* z_pcb);

}  // namespace pda
