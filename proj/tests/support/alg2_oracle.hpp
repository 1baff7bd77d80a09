#pragma once

// Straight-line reference of the full inference pipeline, written against the
// math alone: flat arrays, plain loops, no library calls. Used to pin the
// production pipeline; keep it independent of everything under pda/.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Alg2Input {
  std::size_t num_classes = 0;
  std::size_t slots = 0;
  std::size_t dim = 0;
  std::vector<double> prototypes;  // C*K*D, class-major, unit rows

  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> fmap;  // channel-major, row-major

  std::vector<double> feature;     // length dim
  std::vector<double> projection;  // dim*dim row-major
  double log_scale = 0.0;
  double bg_bias = 0.0;
  double tau = 1.0;
  double alpha = 0.1, beta = 0.9, gamma = 0.0;
  std::vector<double> z_cls;  // length C+1
  std::vector<double> z_pcb;  // empty = absent

  bool use_align = false;
  bool align_per_class = false;
  std::vector<double> aligner_weight;  // (channels+dim) x (2*height*width)
  double bound = 1.0;
};

namespace detail {

inline std::vector<double> normalize(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

inline std::vector<double> project_unit(const Alg2Input& in, const std::vector<double>& v) {
  const std::vector<double> unit = normalize(v);
  std::vector<double> projected(in.dim, 0.0);
  for (std::size_t r = 0; r < in.dim; ++r) {
    for (std::size_t c = 0; c < in.dim; ++c) {
      projected[r] += in.projection[r * in.dim + c] * unit[c];
    }
  }
  return normalize(projected);
}

inline double proto_dot(const Alg2Input& in, const std::vector<double>& z, std::size_t c,
                        std::size_t k) {
  double acc = 0.0;
  const double* p = in.prototypes.data() + (c * in.slots + k) * in.dim;
  for (std::size_t i = 0; i < in.dim; ++i) acc += z[i] * p[i];
  if (acc > 1.0) acc = 1.0;
  if (acc < -1.0) acc = -1.0;
  return acc;
}

inline double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// GAP of the map warped with the offset field predicted for one prototype.
inline std::vector<double> warp_and_pool(const Alg2Input& in, std::size_t proto_c,
                                         std::size_t proto_k) {
  const std::size_t cells = in.height * in.width;
  std::vector<double> input(in.channels + in.dim, 0.0);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cells; ++i) acc += in.fmap[c * cells + i];
    input[c] = acc / static_cast<double>(cells);
  }
  const double* proto = in.prototypes.data() + (proto_c * in.slots + proto_k) * in.dim;
  for (std::size_t i = 0; i < in.dim; ++i) input[in.channels + i] = proto[i];

  std::vector<double> raw(2 * cells, 0.0);
  for (std::size_t i = 0; i < input.size(); ++i) {
    for (std::size_t j = 0; j < raw.size(); ++j) {
      raw[j] += input[i] * in.aligner_weight[i * raw.size() + j];
    }
  }

  std::vector<double> pooled(in.channels, 0.0);
  const double max_y = static_cast<double>(in.height - 1);
  const double max_x = static_cast<double>(in.width - 1);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double acc = 0.0;
    for (std::size_t y = 0; y < in.height; ++y) {
      for (std::size_t x = 0; x < in.width; ++x) {
        const std::size_t j = y * in.width + x;
        const double sy =
            clampd(static_cast<double>(y) + in.bound * std::tanh(raw[cells + j]), 0.0, max_y);
        const double sx =
            clampd(static_cast<double>(x) + in.bound * std::tanh(raw[j]), 0.0, max_x);
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t x0 = static_cast<std::size_t>(sx);
        const std::size_t y1 = y0 + 1 < in.height ? y0 + 1 : in.height - 1;
        const std::size_t x1 = x0 + 1 < in.width ? x0 + 1 : in.width - 1;
        const double fy = sy - static_cast<double>(y0);
        const double fx = sx - static_cast<double>(x0);
        const double v00 = in.fmap[(c * in.height + y0) * in.width + x0];
        const double v01 = in.fmap[(c * in.height + y0) * in.width + x1];
        const double v10 = in.fmap[(c * in.height + y1) * in.width + x0];
        const double v11 = in.fmap[(c * in.height + y1) * in.width + x1];
        acc += (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
               fy * ((1.0 - fx) * v10 + fx * v11);
      }
    }
    pooled[c] = acc / static_cast<double>(cells);
  }
  return pooled;
}

}  // namespace detail

// Returns the C+1 class probabilities of the reference pipeline.
inline std::vector<double> alg2_reference(const Alg2Input& in) {
  using namespace detail;

  const std::vector<double> z0 = project_unit(in, in.feature);

  std::size_t best_c = 0, best_k = 0;
  double best = -2.0;
  for (std::size_t c = 0; c < in.num_classes; ++c) {
    for (std::size_t k = 0; k < in.slots; ++k) {
      const double s = proto_dot(in, z0, c, k);
      if (s > best) {
        best = s;
        best_c = c;
        best_k = k;
      }
    }
  }

  std::vector<double> scores(in.num_classes, -2.0);
  if (!in.use_align) {
    for (std::size_t c = 0; c < in.num_classes; ++c) {
      for (std::size_t k = 0; k < in.slots; ++k) {
        const double s = proto_dot(in, z0, c, k);
        if (s > scores[c]) scores[c] = s;
      }
    }
  } else if (!in.align_per_class) {
    const std::vector<double> aligned = project_unit(in, warp_and_pool(in, best_c, best_k));
    for (std::size_t c = 0; c < in.num_classes; ++c) {
      for (std::size_t k = 0; k < in.slots; ++k) {
        const double s = proto_dot(in, aligned, c, k);
        if (s > scores[c]) scores[c] = s;
      }
    }
  } else {
    for (std::size_t c = 0; c < in.num_classes; ++c) {
      std::size_t star = 0;
      double star_score = -2.0;
      for (std::size_t k = 0; k < in.slots; ++k) {
        const double s = proto_dot(in, z0, c, k);
        if (s > star_score) {
          star_score = s;
          star = k;
        }
      }
      const std::vector<double> aligned = project_unit(in, warp_and_pool(in, c, star));
      for (std::size_t k = 0; k < in.slots; ++k) {
        const double s = proto_dot(in, aligned, c, k);
        if (s > scores[c]) scores[c] = s;
      }
    }
  }

  const double sigma = std::exp(in.log_scale);
  std::vector<double> fused(in.num_classes + 1, 0.0);
  for (std::size_t c = 0; c < in.num_classes; ++c) {
    fused[c] = in.alpha * sigma * scores[c] / in.tau + in.beta * in.z_cls[c];
  }
  fused[in.num_classes] =
      in.alpha * sigma * in.bg_bias + in.beta * in.z_cls[in.num_classes];
  if (!in.z_pcb.empty()) {
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += in.gamma * in.z_pcb[i];
  }

  double max_logit = fused[0];
  for (double v : fused) max_logit = max_logit > v ? max_logit : v;
  std::vector<double> probs(fused.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < fused.size(); ++i) {
    probs[i] = std::exp(fused[i] - max_logit);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
  return probs;
}

}  // namespace oracle
