#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pda/align.hpp"
#include "pda/memory.hpp"
#include "pda/scoring.hpp"
#include "pda/types.hpp"

namespace pda {

// One training RoI. class_id == C (num_classes) marks background; background
// items join the loss but never the EMA memory updates.
struct LabeledItem {
  FeatureVector feature;
  RoiFeatureMap fmap;
  std::size_t class_id;
  LogitVector z_cls;
  std::optional<LogitVector> z_pcb;
};

using LabeledBatch = std::vector<LabeledItem>;

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 100;
  double ema_momentum = 0.9;
  std::uint64_t seed = 0;
  bool train_projection = true;
  bool train_scale = true;
  bool train_bias = true;
  bool train_aligner = true;
  // Cross-entropy on the fused logits (deployment conditions); false trains
  // on the PDA branch alone.
  bool loss_on_fused = true;
};

struct Gradients {
  Matrix projection;
  double log_scale = 0.0;
  double bg_bias = 0.0;
  std::vector<double> aligner;  // same layout as AlignerParams::weight; empty if unused
};

// Mean cross-entropy of the fused (or PDA-only) softmax against class_id.
// Prototypes, z_cls and z_pcb are constants.
double metric_loss(const LabeledBatch& batch, const PrototypeMemory& memory,
                   const PdaParams& params, const AlignerParams* aligner,
                   bool loss_on_fused = true);

// Analytic gradients of metric_loss for W, lambda, bg_bias and the aligner.
// Best-of-K and the global selection pass gradient through the winning slot
// only; both normalizations inside project_and_normalize are differentiated.
Gradients grad_params(const LabeledBatch& batch, const PrototypeMemory& memory,
                      const PdaParams& params, const AlignerParams* aligner,
                      bool loss_on_fused = true);

// theta <- theta - lr * grad for each enabled train_* flag; disabled
// parameters stay bit-identical.
void sgd_step(PdaParams& params, AlignerParams* aligner, const Gradients& grads, double lr,
              const TrainConfig& config);

struct StepStats {
  std::size_t step;
  double loss;
  std::vector<std::size_t> class_occupancy;  // slots updated this step, per class
  double mean_drift_cosine;                  // mean pre/post cosine over updated slots
  double wall_ms;
};

struct FinetuneResult {
  PdaParams params;
  AlignerParams aligner;
  PrototypeMemory memory;  // always frozen on return
  std::vector<StepStats> history;
};

// Per batch: loss + gradients, SGD step, then (unless params.freeze_mem) an
// EMA update on the batch's foreground items projected with the updated W.
// The memory is frozen before returning.
FinetuneResult finetune(const std::vector<LabeledBatch>& stream, PrototypeMemory memory,
                        PdaParams params, AlignerParams aligner, const TrainConfig& config);

// History rows as CSV: step,loss,class_occupancy,mean_drift_cos,wall_ms.
std::string history_csv(const std::vector<StepStats>& history);

}  // namespace pda
