#include "experiment.hpp"

#include <string>

#include "pda/memory.hpp"
#include "pda/scoring.hpp"
#include "pda/train.hpp"

namespace pda {

const char* arm_name(ArmKind kind) {
  switch (kind) {
    case ArmKind::kBaseline: return "baseline";
    case ArmKind::kPdaFrozen: return "pda_frozen";
    case ArmKind::kPdaEma: return "pda_ema";
  }
  return "?";
}

ArmKind arm_from_name(const std::string& name) {
  if (name == "baseline") return ArmKind::kBaseline;
  if (name == "pda_frozen") return ArmKind::kPdaFrozen;
  if (name == "pda_ema") return ArmKind::kPdaEma;
  throw ConfigInvalid("unknown arm '" + name + "'");
}

MetricsReport run_arm(const EpisodeConfig& config, const Episode& episode, const ArmSpec& spec) {
  if (spec.kind == ArmKind::kBaseline) {
    return evaluate(episode, config.num_base,
                    [](const QueryItem& item) { return softmax(item.z_cls); });
  }

  PdaParams params = PdaParams::identity(config.dim);
  params.temperature = spec.tau;
  params.momentum = spec.momentum;
  params.fusion = spec.train_fusion;
  params.use_align = spec.use_align;
  params.align_per_class = spec.align_per_class;
  params.freeze_mem = spec.kind == ArmKind::kPdaFrozen;

  PrototypeMemory memory = init_from_support(episode.support, spec.k, params);
  AlignerParams aligner = AlignerParams::zeros(config.map_channels, config.dim,
                                               config.map_height, config.map_width);

  if (spec.steps > 0) {
    TrainConfig tcfg;
    tcfg.learning_rate = spec.lr;
    tcfg.steps = spec.steps;
    tcfg.ema_momentum = spec.momentum;
    tcfg.train_projection = spec.train_projection;
    tcfg.train_scale = spec.train_scale;
    tcfg.train_bias = spec.train_bias;
    tcfg.train_aligner = spec.train_aligner;
    tcfg.loss_on_fused = spec.loss_on_fused;
    const std::uint64_t stream_seed = spec.stream_seed != 0 ? spec.stream_seed : config.seed;
    const auto stream = gen_train_stream(config, spec.steps, stream_seed);
    FinetuneResult result = finetune(stream, std::move(memory), std::move(params),
                                     std::move(aligner), tcfg);
    params = std::move(result.params);
    aligner = std::move(result.aligner);
    memory = std::move(result.memory);
  } else {
    memory = freeze(std::move(memory));
  }

  params.fusion = spec.eval_fusion;
  return evaluate(episode, config.num_base, [&](const QueryItem& item) {
    return score_roi(item.feature, item.fmap, memory, params, &aligner, item.z_cls, nullptr)
        .probabilities;
  });
}

}  // namespace pda
