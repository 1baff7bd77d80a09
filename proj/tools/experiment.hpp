#pragma once

#include <cstdint>

#include "pda/simgen.hpp"
#include "pda/types.hpp"

namespace pda {

// One cell of an ablation-style experiment: a scoring arm evaluated on one
// episode. Baseline scores with the simulated detector logits alone; the PDA
// arms initialize a memory from the support set, optionally fine-tune, and
// score with the fused pipeline.
enum class ArmKind { kBaseline, kPdaFrozen, kPdaEma };

struct ArmSpec {
  ArmKind kind = ArmKind::kPdaFrozen;
  std::size_t k = 3;
  std::size_t steps = 100;
  double lr = 1e-3;
  double momentum = 0.9;
  double tau = 0.05;
  bool use_align = false;
  bool align_per_class = false;
  FusionWeights eval_fusion{0.1, 0.9, 0.0};
  FusionWeights train_fusion{0.1, 0.9, 0.0};
  bool train_projection = false;
  bool train_scale = true;
  bool train_bias = true;
  bool train_aligner = false;
  bool loss_on_fused = true;
  std::uint64_t stream_seed = 0;  // 0: derive from config.seed
};

const char* arm_name(ArmKind kind);
ArmKind arm_from_name(const std::string& name);  // throws ConfigInvalid

MetricsReport run_arm(const EpisodeConfig& config, const Episode& episode, const ArmSpec& spec);

}  // namespace pda
