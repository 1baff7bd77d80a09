#include "pda/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "pda/core.hpp"

namespace pda {
namespace {

// Generated values are quantized to f32 resolution so on-disk episodes are
// bit-identical to in-memory ones.
double q32(double x) { return static_cast<double>(static_cast<float>(x)); }

void q32(FeatureVector& v) {
  for (auto& x : v) x = q32(x);
}

struct BumpProfile {
  std::vector<double> center_y;  // per channel
  std::vector<double> center_x;
  std::vector<double> gain;      // per channel: makes the zero-shift pooled mass 1
  double rho = 0.9;
};

double bump_mass(const BumpProfile& bump, std::size_t channel, std::size_t height,
                 std::size_t width, double shift_y, double shift_x) {
  const double cy = bump.center_y[channel] + shift_y;
  const double cx = bump.center_x[channel] + shift_x;
  const double inv = 1.0 / (2.0 * bump.rho * bump.rho);
  double mass = 0.0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      mass += std::exp(-(dy * dy + dx * dx) * inv);
    }
  }
  return mass;
}

// Everything derived from config.seed alone, shared between the episode and
// the fine-tuning stream.
struct EpisodeContext {
  std::vector<FeatureVector> support_modes;  // class-major
  std::vector<FeatureVector> query_modes;
  std::vector<FeatureVector> support_means;  // per class, normalized mean of modes
  std::vector<FeatureVector> query_means;
  BumpProfile bump;
  double shift_y = 0.0;  // episode-level base shift of corrupted maps
  double shift_x = 0.0;
};

FeatureVector class_mean(const std::vector<FeatureVector>& modes, std::size_t class_id,
                         std::size_t modes_per_class, std::size_t dim) {
  FeatureVector mean(dim, 0.0);
  for (std::size_t m = 0; m < modes_per_class; ++m) {
    const auto& mode = modes[class_id * modes_per_class + m];
    for (std::size_t i = 0; i < dim; ++i) mean[i] += mode[i];
  }
  return l2_normalize(mean);
}

EpisodeContext make_context(const EpisodeConfig& config, Rng& rng) {
  EpisodeContext ctx;
  const std::size_t classes = config.num_classes();
  const std::size_t modes = config.modes_per_class;

  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<FeatureVector> class_modes;
    for (std::size_t m = 0; m < modes; ++m) {
      FeatureVector v = rng.unit_vector(config.dim);
      if (config.orthogonal_modes) {
        for (const auto& prev : class_modes) {
          const double proj = dot(v, prev);
          for (std::size_t i = 0; i < config.dim; ++i) v[i] -= proj * prev[i];
        }
        v = l2_normalize(v);
      }
      class_modes.push_back(std::move(v));
    }
    for (auto& v : class_modes) {
      q32(v);
      ctx.support_modes.push_back(std::move(v));
    }
  }

  // Query-side modes: each support mode rotated in a random orthogonal plane.
  const double theta = config.query_rotation;
  for (const auto& mode : ctx.support_modes) {
    FeatureVector partner = rng.unit_vector(config.dim);
    const double proj = dot(partner, mode);
    for (std::size_t i = 0; i < config.dim; ++i) partner[i] -= proj * mode[i];
    partner = l2_normalize(partner);
    FeatureVector rotated(config.dim);
    for (std::size_t i = 0; i < config.dim; ++i) {
      rotated[i] = std::cos(theta) * mode[i] + std::sin(theta) * partner[i];
    }
    q32(rotated);
    ctx.query_modes.push_back(std::move(rotated));
  }

  for (std::size_t c = 0; c < classes; ++c) {
    ctx.support_means.push_back(class_mean(ctx.support_modes, c, modes, config.dim));
    ctx.query_means.push_back(class_mean(ctx.query_modes, c, modes, config.dim));
  }

  // Channel-specific bump centers, fixed for the whole episode.
  const double margin_y = config.map_height > 2 ? 1.0 : 0.0;
  const double margin_x = config.map_width > 2 ? 1.0 : 0.0;
  ctx.bump.center_y.resize(config.map_channels);
  ctx.bump.center_x.resize(config.map_channels);
  ctx.bump.gain.resize(config.map_channels);
  for (std::size_t c = 0; c < config.map_channels; ++c) {
    ctx.bump.center_y[c] =
        rng.uniform(margin_y, static_cast<double>(config.map_height - 1) - margin_y);
    ctx.bump.center_x[c] =
        rng.uniform(margin_x, static_cast<double>(config.map_width - 1) - margin_x);
  }
  for (std::size_t c = 0; c < config.map_channels; ++c) {
    const double mass = bump_mass(ctx.bump, c, config.map_height, config.map_width, 0.0, 0.0);
    ctx.bump.gain[c] = static_cast<double>(config.map_height * config.map_width) / mass;
  }

  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  ctx.shift_y = config.query_shift * std::sin(phi);
  ctx.shift_x = config.query_shift * std::cos(phi);
  return ctx;
}

// Map whose channel c holds feature[c] spread over a channel-specific bump,
// plus zero-mean per-cell jitter: the zero-shift pooled vector equals feature.
RoiFeatureMap synth_map(const FeatureVector& feature, const EpisodeContext& ctx,
                        const EpisodeConfig& config, double shift_y, double shift_x, Rng& rng) {
  const std::size_t height = config.map_height;
  const std::size_t width = config.map_width;
  std::vector<double> data(config.map_channels * height * width);
  const double inv = 1.0 / (2.0 * ctx.bump.rho * ctx.bump.rho);
  for (std::size_t c = 0; c < config.map_channels; ++c) {
    const double cy = ctx.bump.center_y[c] + shift_y;
    const double cx = ctx.bump.center_x[c] + shift_x;
    std::vector<double> jitter(height * width);
    double jitter_mean = 0.0;
    for (auto& j : jitter) {
      j = config.map_jitter * rng.gaussian();
      jitter_mean += j;
    }
    jitter_mean /= static_cast<double>(jitter.size());
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double bump = std::exp(-(dy * dy + dx * dx) * inv) * ctx.bump.gain[c];
        data[(c * height + y) * width + x] =
            q32(feature[c] * bump + jitter[y * width + x] - jitter_mean);
      }
    }
  }
  return RoiFeatureMap(config.map_channels, height, width, std::move(data));
}

FeatureVector draw_feature(const std::vector<FeatureVector>& modes, std::size_t class_id,
                           const EpisodeConfig& config, std::size_t mode_index, Rng& rng) {
  const auto& mode = modes[class_id * config.modes_per_class + mode_index];
  FeatureVector v(config.dim);
  for (std::size_t i = 0; i < config.dim; ++i) {
    v[i] = mode[i] + config.mode_spread * rng.gaussian();
  }
  v = l2_normalize(v);
  q32(v);
  return v;
}

// Pooled feature + map + detector logits for one query/stream item whose
// embedding lives in the query-side (current) distribution.
QueryItem make_item(std::size_t class_id, const EpisodeContext& ctx,
                    const EpisodeConfig& config, Rng& rng, bool background = false) {
  FeatureVector direction = background
                                ? rng.unit_vector(config.dim)
                                : draw_feature(ctx.query_modes, class_id, config,
                                               rng.index(config.modes_per_class), rng);
  if (background) q32(direction);

  double shift_y = 0.0, shift_x = 0.0;
  if (config.query_shift > 0.0) {
    const double wobble = rng.uniform(0.8, 1.2);
    shift_y = ctx.shift_y * wobble;
    shift_x = ctx.shift_x * wobble;
  }
  // When map_channels == dim the map carries the embedding itself and the
  // item feature is pooled back out of it (shift corruption included);
  // otherwise the map is auxiliary and carries the leading dims.
  FeatureVector carried(config.map_channels, 0.0);
  for (std::size_t c = 0; c < config.map_channels && c < direction.size(); ++c) {
    carried[c] = direction[c];
  }
  RoiFeatureMap fmap = synth_map(carried, ctx, config, shift_y, shift_x, rng);

  FeatureVector feature;
  if (config.map_channels == config.dim) {
    feature = global_average_pool(fmap);
    q32(feature);
  } else {
    feature = direction;
  }
  LogitVector z_cls = gen_detector_logits(feature, ctx.query_means, config, rng);
  return QueryItem{std::move(feature), std::move(fmap), class_id, std::move(z_cls)};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

void validate(const EpisodeConfig& config) {
  if (config.num_classes() == 0) throw ConfigInvalid("episode: no classes");
  if (config.dim == 0) throw ConfigInvalid("episode: dim == 0");
  if (config.modes_per_class == 0) throw ConfigInvalid("episode: modes_per_class == 0");
  if (!(config.mode_spread > 0.0)) throw ConfigInvalid("episode: mode_spread must be > 0");
  if (config.shots == 0) throw ConfigInvalid("episode: shots == 0");
  if (config.queries_per_class == 0) throw ConfigInvalid("episode: queries_per_class == 0");
  if (config.map_channels == 0 || config.map_height == 0 || config.map_width == 0) {
    throw ConfigInvalid("episode: zero map dimension");
  }
  if (config.orthogonal_modes && config.modes_per_class > config.dim) {
    throw ConfigInvalid("episode: cannot orthogonalize more modes than dims");
  }
  if (config.strict_shots) {
    static constexpr std::size_t kAllowed[] = {1, 2, 3, 5, 10};
    if (std::find(std::begin(kAllowed), std::end(kAllowed), config.shots) ==
        std::end(kAllowed)) {
      throw ConfigInvalid("episode: strict protocol requires shots in {1,2,3,5,10}");
    }
  }
}

Episode gen_episode(const EpisodeConfig& config) {
  validate(config);
  Rng rng(mix_seed(config.seed, 0));
  const EpisodeContext ctx = make_context(config, rng);

  Episode episode;
  episode.support_modes = ctx.support_modes;
  episode.query_modes = ctx.query_modes;
  episode.support.num_classes = config.num_classes();
  for (std::size_t c = 0; c < config.num_classes(); ++c) {
    for (std::size_t shot = 0; shot < config.shots; ++shot) {
      // Shots cycle through the submodes so small supports still cover them.
      const std::size_t mode_index = shot % config.modes_per_class;
      episode.support.entries.push_back(
          {c, draw_feature(ctx.support_modes, c, config, mode_index, rng)});
    }
  }
  for (std::size_t c = 0; c < config.num_classes(); ++c) {
    for (std::size_t i = 0; i < config.queries_per_class; ++i) {
      episode.query.push_back(make_item(c, ctx, config, rng));
    }
  }
  return episode;
}

LogitVector gen_detector_logits(const FeatureVector& feature,
                                const std::vector<FeatureVector>& class_means,
                                const EpisodeConfig& config, Rng& rng) {
  const FeatureVector unit = l2_normalize(feature);
  LogitVector logits(class_means.size() + 1);
  double best_cos = -1.0;
  for (std::size_t c = 0; c < class_means.size(); ++c) {
    const double cos_c = cosine(unit, class_means[c]);
    best_cos = std::max(best_cos, cos_c);
    double z = config.detector_scale * cos_c;
    if (c < config.num_base) z += config.base_bias;
    logits[c] = q32(z + config.detector_noise * rng.gaussian());
  }
  logits.back() = q32(config.detector_scale * (1.0 - best_cos - config.detector_bg_margin) +
                      config.detector_noise * rng.gaussian());
  return logits;
}

std::vector<LabeledBatch> gen_train_stream(const EpisodeConfig& config, std::size_t steps,
                                           std::uint64_t seed) {
  validate(config);
  Rng ctx_rng(mix_seed(config.seed, 0));
  const EpisodeContext ctx = make_context(config, ctx_rng);

  Rng rng(mix_seed(seed, 1));
  std::vector<LabeledBatch> stream;
  stream.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    LabeledBatch batch;
    for (std::size_t c = 0; c < config.num_classes(); ++c) {
      for (std::size_t i = 0; i < config.train_items_per_class; ++i) {
        QueryItem item = make_item(c, ctx, config, rng);
        batch.push_back(LabeledItem{std::move(item.feature), std::move(item.fmap), c,
                                    std::move(item.z_cls), std::nullopt});
      }
    }
    for (std::size_t i = 0; i < config.train_bg_per_step; ++i) {
      QueryItem item = make_item(config.num_classes(), ctx, config, rng, /*background=*/true);
      batch.push_back(LabeledItem{std::move(item.feature), std::move(item.fmap),
                                  config.num_classes(), std::move(item.z_cls), std::nullopt});
    }
    stream.push_back(std::move(batch));
  }
  return stream;
}

MetricsReport evaluate(const Episode& episode, std::size_t num_base, const Scorer& scorer) {
  if (episode.query.empty()) throw EmptyQuery("evaluate: no query items");
  MetricsReport report;
  std::size_t hits = 0, base_hits = 0, novel_hits = 0;
  for (const auto& item : episode.query) {
    const std::vector<double> probs = scorer(item);
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    const bool hit = pred == item.true_class;
    ++report.n_overall;
    hits += hit;
    if (item.true_class < num_base) {
      ++report.n_base;
      base_hits += hit;
    } else {
      ++report.n_novel;
      novel_hits += hit;
    }
  }
  report.overall = static_cast<double>(hits) / static_cast<double>(report.n_overall);
  report.base = report.n_base == 0
                    ? 0.0
                    : static_cast<double>(base_hits) / static_cast<double>(report.n_base);
  report.novel = report.n_novel == 0
                     ? 0.0
                     : static_cast<double>(novel_hits) / static_cast<double>(report.n_novel);
  return report;
}

AggregateStats aggregate(const std::vector<double>& values) {
  AggregateStats stats;
  if (values.empty()) return stats;
  double sum = 0.0;
  for (double v : values) sum += v;
  stats.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - stats.mean) * (v - stats.mean);
    stats.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return stats;
}

namespace {

using nlohmann::json;

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

EpisodeConfig episode_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigInvalid("config: top level must be an object");

  static const char* kKeys[] = {
      "num_base",       "num_novel",        "dim",
      "modes_per_class", "shots",           "queries_per_class",
      "mode_spread",    "orthogonal_modes", "base_bias",
      "detector_scale", "detector_noise",   "detector_bg_margin",
      "query_rotation", "map_channels",     "map_height",
      "map_width",      "map_jitter",       "query_shift",
      "train_items_per_class", "train_bg_per_step", "seed",
      "strict_shots"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw ConfigInvalid("config: unknown key '" + key + "'");
    }
  }

  EpisodeConfig c;
  try {
    read_key(j, "num_base", c.num_base);
    read_key(j, "num_novel", c.num_novel);
    read_key(j, "dim", c.dim);
    read_key(j, "modes_per_class", c.modes_per_class);
    read_key(j, "shots", c.shots);
    read_key(j, "queries_per_class", c.queries_per_class);
    read_key(j, "mode_spread", c.mode_spread);
    read_key(j, "orthogonal_modes", c.orthogonal_modes);
    read_key(j, "base_bias", c.base_bias);
    read_key(j, "detector_scale", c.detector_scale);
    read_key(j, "detector_noise", c.detector_noise);
    read_key(j, "detector_bg_margin", c.detector_bg_margin);
    read_key(j, "query_rotation", c.query_rotation);
    read_key(j, "map_channels", c.map_channels);
    read_key(j, "map_height", c.map_height);
    read_key(j, "map_width", c.map_width);
    read_key(j, "map_jitter", c.map_jitter);
    read_key(j, "query_shift", c.query_shift);
    read_key(j, "train_items_per_class", c.train_items_per_class);
    read_key(j, "train_bg_per_step", c.train_bg_per_step);
    read_key(j, "seed", c.seed);
    read_key(j, "strict_shots", c.strict_shots);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string episode_config_to_json(const EpisodeConfig& c) {
  json j;
  j["num_base"] = c.num_base;
  j["num_novel"] = c.num_novel;
  j["dim"] = c.dim;
  j["modes_per_class"] = c.modes_per_class;
  j["shots"] = c.shots;
  j["queries_per_class"] = c.queries_per_class;
  j["mode_spread"] = c.mode_spread;
  j["orthogonal_modes"] = c.orthogonal_modes;
  j["base_bias"] = c.base_bias;
  j["detector_scale"] = c.detector_scale;
  j["detector_noise"] = c.detector_noise;
  j["detector_bg_margin"] = c.detector_bg_margin;
  j["query_rotation"] = c.query_rotation;
  j["map_channels"] = c.map_channels;
  j["map_height"] = c.map_height;
  j["map_width"] = c.map_width;
  j["map_jitter"] = c.map_jitter;
  j["query_shift"] = c.query_shift;
  j["train_items_per_class"] = c.train_items_per_class;
  j["train_bg_per_step"] = c.train_bg_per_step;
  j["seed"] = c.seed;
  j["strict_shots"] = c.strict_shots;
  return j.dump(2) + "\n";
}

}  // namespace pda
