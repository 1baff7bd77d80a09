#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pda/memory.hpp"
#include "pda/rng.hpp"
#include "pda/train.hpp"
#include "pda/types.hpp"

namespace pda {

// Synthetic episode knobs. Classes 0..num_base-1 are base, the rest novel.
struct EpisodeConfig {
  std::size_t num_base = 0;
  std::size_t num_novel = 5;
  std::size_t dim = 16;
  std::size_t modes_per_class = 1;   // ground-truth submodes
  std::size_t shots = 5;             // support entries per class
  std::size_t queries_per_class = 20;
  double mode_spread = 0.15;         // within-mode Gaussian noise scale
  bool orthogonal_modes = false;     // orthonormalize each class's submodes

  // Simulated detector logits.
  double base_bias = 0.0;            // added to every base-class logit
  double detector_scale = 2.5;
  double detector_noise = 0.1;
  double detector_bg_margin = 0.25;

  // Distribution drift between support and query/fine-tuning features.
  double query_rotation = 0.0;       // radians

  // RoI feature maps.
  std::size_t map_channels = 8;
  std::size_t map_height = 5;
  std::size_t map_width = 5;
  double map_jitter = 0.05;          // zero-mean per-cell variation
  double query_shift = 0.0;          // cells; geometric corruption of query maps

  // Fine-tuning stream.
  std::size_t train_items_per_class = 4;
  std::size_t train_bg_per_step = 0;

  std::uint64_t seed = 1;
  bool strict_shots = false;         // enforce shots in {1,2,3,5,10}

  std::size_t num_classes() const { return num_base + num_novel; }
};

void validate(const EpisodeConfig& config);

// JSON <-> config. Unknown keys are rejected.
EpisodeConfig episode_config_from_json(const std::string& json_text);
std::string episode_config_to_json(const EpisodeConfig& config);

struct QueryItem {
  FeatureVector feature;  // pooled from fmap
  RoiFeatureMap fmap;
  std::size_t true_class;
  LogitVector z_cls;
};

struct Episode {
  SupportSet support;
  std::vector<QueryItem> query;
  // Oracle-only ground truth; must never reach memory initialization.
  std::vector<FeatureVector> support_modes;  // num_classes * modes_per_class
  std::vector<FeatureVector> query_modes;    // rotated variants used for query/train draws
};

// Deterministic per config.seed. Support features come from support_modes;
// query items (and the train stream) come from query_modes, with maps built
// so that the pooled vector reproduces the item feature.
Episode gen_episode(const EpisodeConfig& config);

// z_cls = scale * cos(feature, class mean) (+ base_bias on base classes)
// + noise; background logit from a margin rule on the best foreground cosine.
LogitVector gen_detector_logits(const FeatureVector& feature,
                                const std::vector<FeatureVector>& class_means,
                                const EpisodeConfig& config, Rng& rng);

// Labeled fine-tuning batches drawn from the episode's current (query-side)
// distribution: the desk-scale analog of augmented support RoIs seen during
// fine-tuning. Deterministic per (config, seed).
std::vector<LabeledBatch> gen_train_stream(const EpisodeConfig& config, std::size_t steps,
                                           std::uint64_t seed);

struct MetricsReport {
  double overall = 0.0;
  double base = 0.0;    // meaningful only when n_base > 0
  double novel = 0.0;   // meaningful only when n_novel > 0
  std::size_t n_overall = 0;
  std::size_t n_base = 0;
  std::size_t n_novel = 0;
};

using Scorer = std::function<std::vector<double>(const QueryItem&)>;

// Top-1 accuracy of argmax probability against true_class, split by
// base/novel membership (classes below config-level num_base are base).
MetricsReport evaluate(const Episode& episode, std::size_t num_base, const Scorer& scorer);

struct AggregateStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

AggregateStats aggregate(const std::vector<double>& values);

}  // namespace pda
