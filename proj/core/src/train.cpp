#include "pda/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "pda/core.hpp"

namespace pda {
namespace {

// Forward pass with every intermediate the backward pass needs.
struct WarpTape {
  FeatureVector input;       // concat(GAP(F), conditioning prototype)
  std::vector<double> raw;   // pre-tanh, length 2*H*W (dx plane, dy plane)
  OffsetField offsets;
  FeatureVector pooled;      // u = GAP(warped)
  FeatureVector z_raw;       // W u
  double z_norm = 0.0;
  FeatureVector z_hat;
};

struct ItemTape {
  FeatureVector f_hat;
  FeatureVector z0_raw;
  double z0_norm = 0.0;
  FeatureVector z0_hat;
  SlotRef global_best{0, 0};
  std::vector<WarpTape> warps;  // empty without alignment; 1 or C with it
  ClassScores scores;
  LogitVector z_pda;
  LogitVector fused;
  std::vector<double> probs;      // softmax(fused)
  std::vector<double> pda_probs;  // softmax(z_pda), for the PDA-only loss
};

ClassScores best_of_k_tape(const FeatureVector& z, const PrototypeMemory& memory) {
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

WarpTape run_warp(const RoiFeatureMap& fmap, std::span<const double> prototype,
                  const PdaParams& params, const AlignerParams& aligner) {
  WarpTape tape;
  tape.input = global_average_pool(fmap);
  tape.input.insert(tape.input.end(), prototype.begin(), prototype.end());

  const std::size_t cells = aligner.height * aligner.width;
  tape.raw.assign(2 * cells, 0.0);
  for (std::size_t i = 0; i < tape.input.size(); ++i) {
    const double xi = tape.input[i];
    const double* row = aligner.weight.data() + i * tape.raw.size();
    for (std::size_t j = 0; j < tape.raw.size(); ++j) tape.raw[j] += xi * row[j];
  }
  tape.offsets.height = aligner.height;
  tape.offsets.width = aligner.width;
  tape.offsets.bound = kDefaultOffsetBound;
  tape.offsets.dx.resize(cells);
  tape.offsets.dy.resize(cells);
  for (std::size_t j = 0; j < cells; ++j) {
    tape.offsets.dx[j] = tape.offsets.bound * std::tanh(tape.raw[j]);
    tape.offsets.dy[j] = tape.offsets.bound * std::tanh(tape.raw[cells + j]);
  }
  const RoiFeatureMap warped = grid_sample(fmap, tape.offsets);
  tape.pooled = global_average_pool(warped);
  tape.z_raw = matvec(params.projection, tape.pooled);
  tape.z_norm = l2_norm(tape.z_raw);
  if (tape.z_norm < kDegenerateNormThreshold) {
    throw DegenerateVector("run_warp: projected aligned vector is degenerate");
  }
  tape.z_hat.resize(tape.z_raw.size());
  for (std::size_t i = 0; i < tape.z_raw.size(); ++i) tape.z_hat[i] = tape.z_raw[i] / tape.z_norm;
  return tape;
}

ItemTape run_forward(const LabeledItem& item, const PrototypeMemory& memory,
                     const PdaParams& params, const AlignerParams* aligner) {
  ItemTape tape;
  tape.f_hat = l2_normalize(item.feature);
  tape.z0_raw = matvec(params.projection, tape.f_hat);
  tape.z0_norm = l2_norm(tape.z0_raw);
  if (tape.z0_norm < kDegenerateNormThreshold) {
    throw DegenerateVector("run_forward: projection annihilated the feature");
  }
  tape.z0_hat.resize(tape.z0_raw.size());
  for (std::size_t i = 0; i < tape.z0_raw.size(); ++i) {
    tape.z0_hat[i] = tape.z0_raw[i] / tape.z0_norm;
  }
  tape.global_best = select_global_best(tape.z0_hat, memory);

  if (params.use_align) {
    if (aligner == nullptr) throw ConfigInvalid("run_forward: use_align without aligner");
    if (!params.align_per_class) {
      tape.warps.push_back(run_warp(
          item.fmap, memory.slot(tape.global_best.class_id, tape.global_best.slot), params,
          *aligner));
      tape.scores = best_of_k_tape(tape.warps[0].z_hat, memory);
    } else {
      const ClassScores base = best_of_k_tape(tape.z0_hat, memory);
      tape.scores.values.resize(memory.num_classes());
      tape.scores.best_slot.resize(memory.num_classes());
      for (std::size_t c = 0; c < memory.num_classes(); ++c) {
        tape.warps.push_back(
            run_warp(item.fmap, memory.slot(c, base.best_slot[c]), params, *aligner));
        const ClassScores warped = best_of_k_tape(tape.warps[c].z_hat, memory);
        tape.scores.values[c] = warped.values[c];
        tape.scores.best_slot[c] = warped.best_slot[c];
      }
    }
  } else {
    tape.scores = best_of_k_tape(tape.z0_hat, memory);
  }

  tape.z_pda = pda_logits(tape.scores, params);
  tape.fused = fuse(tape.z_pda, item.z_cls,
                    item.z_pcb.has_value() ? &item.z_pcb.value() : nullptr, params.fusion);
  tape.probs = softmax(tape.fused);
  tape.pda_probs = softmax(tape.z_pda);
  return tape;
}

// d(bilinear at clamped (sy,sx)) / d(sy,sx), using the same cell choice as the
// forward sampler.
void bilinear_coord_grads(const RoiFeatureMap& fmap, std::size_t c, double sy, double sx,
                          double& dsy, double& dsx) {
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
  dsx = (1.0 - fy) * (fmap.at(c, y0, x1) - fmap.at(c, y0, x0)) +
        fy * (fmap.at(c, y1, x1) - fmap.at(c, y1, x0));
  dsy = (1.0 - fx) * (fmap.at(c, y1, x0) - fmap.at(c, y0, x0)) +
        fx * (fmap.at(c, y1, x1) - fmap.at(c, y0, x1));
}

// Backward through one warp chain, given dL/d(z_hat). Accumulates into the
// projection and aligner gradients.
void backward_warp(const WarpTape& warp, const RoiFeatureMap& fmap, const PdaParams& params,
                   const FeatureVector& dz_hat, Matrix& d_projection,
                   std::vector<double>& d_aligner) {
  const std::size_t dim = dz_hat.size();
  // Through the normalization: dz_raw = (dz_hat - z_hat (z_hat . dz_hat)) / n.
  double inner = 0.0;
  for (std::size_t i = 0; i < dim; ++i) inner += warp.z_hat[i] * dz_hat[i];
  FeatureVector dz_raw(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    dz_raw[i] = (dz_hat[i] - warp.z_hat[i] * inner) / warp.z_norm;
  }
  // z_raw = W u.
  FeatureVector du(warp.pooled.size(), 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < warp.pooled.size(); ++c) {
      d_projection.at(r, c) += dz_raw[r] * warp.pooled[c];
      du[c] += params.projection.at(r, c) * dz_raw[r];
    }
  }
  // u = GAP(warped): every cell of channel c receives du[c]/(H*W).
  const std::size_t cells = warp.offsets.height * warp.offsets.width;
  const double inv_cells = 1.0 / static_cast<double>(cells);
  const double max_y = static_cast<double>(fmap.height() - 1);
  const double max_x = static_cast<double>(fmap.width() - 1);

  std::vector<double> draw(2 * cells, 0.0);
  for (std::size_t y = 0; y < warp.offsets.height; ++y) {
    for (std::size_t x = 0; x < warp.offsets.width; ++x) {
      const std::size_t j = y * warp.offsets.width + x;
      const double sy = static_cast<double>(y) + warp.offsets.dy[j];
      const double sx = static_cast<double>(x) + warp.offsets.dx[j];
      double gx = 0.0, gy = 0.0;
      for (std::size_t c = 0; c < fmap.channels(); ++c) {
        double dsy = 0.0, dsx = 0.0;
        bilinear_coord_grads(fmap, c, sy, sx, dsy, dsx);
        gx += du[c] * inv_cells * dsx;
        gy += du[c] * inv_cells * dsy;
      }
      // Clamped coordinates stop the gradient.
      if (sx < 0.0 || sx > max_x) gx = 0.0;
      if (sy < 0.0 || sy > max_y) gy = 0.0;
      const double tx = std::tanh(warp.raw[j]);
      const double ty = std::tanh(warp.raw[cells + j]);
      draw[j] = gx * warp.offsets.bound * (1.0 - tx * tx);
      draw[cells + j] = gy * warp.offsets.bound * (1.0 - ty * ty);
    }
  }
  // raw = weight^T input.
  for (std::size_t i = 0; i < warp.input.size(); ++i) {
    const double xi = warp.input[i];
    if (xi == 0.0) continue;
    double* row = d_aligner.data() + i * draw.size();
    for (std::size_t j = 0; j < draw.size(); ++j) row[j] += xi * draw[j];
  }
}

double item_loss(const ItemTape& tape, std::size_t target, bool loss_on_fused) {
  const auto& probs = loss_on_fused ? tape.probs : tape.pda_probs;
  if (target >= probs.size()) throw DimensionMismatch("item class_id out of range");
  return -std::log(probs[target]);
}

}  // namespace

double metric_loss(const LabeledBatch& batch, const PrototypeMemory& memory,
                   const PdaParams& params, const AlignerParams* aligner, bool loss_on_fused) {
  if (batch.empty()) throw EmptyBatch("metric_loss: empty batch");
  double total = 0.0;
  for (const auto& item : batch) {
    const ItemTape tape = run_forward(item, memory, params, aligner);
    total += item_loss(tape, item.class_id, loss_on_fused);
  }
  return total / static_cast<double>(batch.size());
}

Gradients grad_params(const LabeledBatch& batch, const PrototypeMemory& memory,
                      const PdaParams& params, const AlignerParams* aligner,
                      bool loss_on_fused) {
  if (batch.empty()) throw EmptyBatch("grad_params: empty batch");
  const std::size_t dim = params.dim();
  const double sigma = std::exp(params.log_scale);

  Gradients grads;
  grads.projection = Matrix(dim, dim);
  if (aligner != nullptr) grads.aligner.assign(aligner->weight.size(), 0.0);

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    const ItemTape tape = run_forward(item, memory, params, aligner);
    const std::size_t n_logits = tape.z_pda.size();

    // dL/dz_pda, including the fusion weight when training on fused logits.
    std::vector<double> d_pda(n_logits);
    if (loss_on_fused) {
      for (std::size_t i = 0; i < n_logits; ++i) {
        const double d_fused = (tape.probs[i] - (i == item.class_id ? 1.0 : 0.0)) * inv_batch;
        d_pda[i] = params.fusion.alpha * d_fused;
      }
    } else {
      for (std::size_t i = 0; i < n_logits; ++i) {
        d_pda[i] = (tape.pda_probs[i] - (i == item.class_id ? 1.0 : 0.0)) * inv_batch;
      }
    }

    // z_pda scales linearly with sigma = exp(lambda).
    for (std::size_t i = 0; i < n_logits; ++i) grads.log_scale += d_pda[i] * tape.z_pda[i];
    grads.bg_bias += d_pda[n_logits - 1] * sigma;

    std::vector<double> d_score(memory.num_classes());
    for (std::size_t c = 0; c < memory.num_classes(); ++c) {
      d_score[c] = d_pda[c] * sigma / params.temperature;
    }

    if (!params.use_align) {
      // s_c = z0_hat . p(c, win_c): gradient through the winning slots only.
      FeatureVector dz_hat(dim, 0.0);
      for (std::size_t c = 0; c < memory.num_classes(); ++c) {
        const auto proto = memory.slot(c, tape.scores.best_slot[c]);
        for (std::size_t i = 0; i < dim; ++i) dz_hat[i] += d_score[c] * proto[i];
      }
      double inner = 0.0;
      for (std::size_t i = 0; i < dim; ++i) inner += tape.z0_hat[i] * dz_hat[i];
      for (std::size_t r = 0; r < dim; ++r) {
        const double dz_raw = (dz_hat[r] - tape.z0_hat[r] * inner) / tape.z0_norm;
        for (std::size_t c = 0; c < dim; ++c) {
          grads.projection.at(r, c) += dz_raw * tape.f_hat[c];
        }
      }
    } else if (!params.align_per_class) {
      FeatureVector dz_hat(dim, 0.0);
      for (std::size_t c = 0; c < memory.num_classes(); ++c) {
        const auto proto = memory.slot(c, tape.scores.best_slot[c]);
        for (std::size_t i = 0; i < dim; ++i) dz_hat[i] += d_score[c] * proto[i];
      }
      backward_warp(tape.warps[0], item.fmap, params, dz_hat, grads.projection, grads.aligner);
    } else {
      for (std::size_t c = 0; c < memory.num_classes(); ++c) {
        const auto proto = memory.slot(c, tape.scores.best_slot[c]);
        FeatureVector dz_hat(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) dz_hat[i] = d_score[c] * proto[i];
        backward_warp(tape.warps[c], item.fmap, params, dz_hat, grads.projection,
                      grads.aligner);
      }
    }
  }
  return grads;
}

void sgd_step(PdaParams& params, AlignerParams* aligner, const Gradients& grads, double lr,
              const TrainConfig& config) {
  if (!(lr > 0.0) && lr != 0.0) throw ConfigInvalid("sgd_step: negative learning rate");
  if (config.train_projection) {
    for (std::size_t i = 0; i < params.projection.data.size(); ++i) {
      params.projection.data[i] -= lr * grads.projection.data[i];
    }
  }
  if (config.train_scale) params.log_scale -= lr * grads.log_scale;
  if (config.train_bias) params.bg_bias -= lr * grads.bg_bias;
  if (config.train_aligner && aligner != nullptr && !grads.aligner.empty()) {
    for (std::size_t i = 0; i < aligner->weight.size(); ++i) {
      aligner->weight[i] -= lr * grads.aligner[i];
    }
  }
}

FinetuneResult finetune(const std::vector<LabeledBatch>& stream, PrototypeMemory memory,
                        PdaParams params, AlignerParams aligner, const TrainConfig& config) {
  validate(params);
  if (!params.freeze_mem && memory.frozen()) {
    throw MemoryFrozen("finetune: EMA requested on a frozen memory");
  }

  FinetuneResult result{std::move(params), std::move(aligner), thaw(std::move(memory)), {}};

  for (std::size_t step = 0; step < stream.size(); ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const LabeledBatch& batch = stream[step];
    const double loss =
        metric_loss(batch, result.memory, result.params, &result.aligner, config.loss_on_fused);
    const Gradients grads =
        grad_params(batch, result.memory, result.params, &result.aligner, config.loss_on_fused);
    sgd_step(result.params, &result.aligner, grads, config.learning_rate, config);

    UpdateReport report;
    if (!result.params.freeze_mem) {
      std::vector<std::pair<std::size_t, FeatureVector>> foreground;
      for (const auto& item : batch) {
        if (item.class_id >= result.memory.num_classes()) continue;  // background
        foreground.emplace_back(item.class_id,
                                project_and_normalize(item.feature, result.params.projection));
      }
      if (!foreground.empty()) {
        report = ema_update(result.memory, foreground, config.ema_momentum);
      }
    }

    StepStats stats;
    stats.step = step;
    stats.loss = loss;
    stats.class_occupancy.assign(result.memory.num_classes(), 0);
    double drift_sum = 0.0;
    for (const auto& u : report.updates) {
      ++stats.class_occupancy[u.class_id];
      drift_sum += u.pre_post_cosine;
    }
    stats.mean_drift_cosine =
        report.updates.empty() ? 1.0 : drift_sum / static_cast<double>(report.updates.size());
    stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
    result.history.push_back(std::move(stats));
  }

  result.memory = freeze(std::move(result.memory));
  return result;
}

std::string history_csv(const std::vector<StepStats>& history) {
  std::string out = "step,loss,class_occupancy,mean_drift_cos,wall_ms\n";
  char buf[64];
  for (const auto& row : history) {
    out += std::to_string(row.step);
    std::snprintf(buf, sizeof(buf), ",%.10g,", row.loss);
    out += buf;
    for (std::size_t c = 0; c < row.class_occupancy.size(); ++c) {
      if (c > 0) out += '|';
      out += std::to_string(row.class_occupancy[c]);
    }
    std::snprintf(buf, sizeof(buf), ",%.10g,%.3f\n", row.mean_drift_cosine, row.wall_ms);
    out += buf;
  }
  return out;
}

}  // namespace pda
