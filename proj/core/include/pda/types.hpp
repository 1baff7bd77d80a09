#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pda/errors.hpp"

namespace pda {

// One RoI embedding. Entries must be finite; dimension is fixed per session.
using FeatureVector = std::vector<double>;

// Length C+1: indices 0..C-1 are foreground classes, index C is background.
using LogitVector = std::vector<double>;

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static Matrix identity(std::size_t n);
};

FeatureVector matvec(const Matrix& m, std::span<const double> v);

// Pre-pooling RoI feature map, channel-major then row-major.
class RoiFeatureMap {
 public:
  RoiFeatureMap(std::size_t channels, std::size_t height, std::size_t width);
  RoiFeatureMap(std::size_t channels, std::size_t height, std::size_t width,
                std::vector<double> data);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  std::size_t channels_, height_, width_;
  std::vector<double> data_;
};

// C x K x D unit-norm prototype slots. Mutation is rejected while frozen.
class PrototypeMemory {
 public:
  PrototypeMemory(std::size_t num_classes, std::size_t slots_per_class, std::size_t dim,
                  std::vector<double> prototypes, bool frozen = false);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t slots_per_class() const { return slots_per_class_; }
  std::size_t dim() const { return dim_; }
  bool frozen() const { return frozen_; }

  std::span<const double> slot(std::size_t class_id, std::size_t slot) const;

  // Replaces one slot. The vector must be unit-norm within 1e-6.
  void set_slot(std::size_t class_id, std::size_t slot, std::span<const double> value);

  // Class-major, then slot, then dim.
  const std::vector<double>& raw() const { return prototypes_; }

 private:
  friend PrototypeMemory freeze(PrototypeMemory m);
  friend PrototypeMemory thaw(PrototypeMemory m);

  std::size_t num_classes_, slots_per_class_, dim_;
  std::vector<double> prototypes_;
  bool frozen_;
};

PrototypeMemory freeze(PrototypeMemory m);
PrototypeMemory thaw(PrototypeMemory m);

struct FusionWeights {
  double alpha = 0.1;
  double beta = 0.9;
  double gamma = 0.0;
};

// Learnable head parameters plus the fixed fusion/protocol configuration.
struct PdaParams {
  Matrix projection;          // W, D x D, identity at construction
  double log_scale = 0.0;     // lambda; scale sigma = exp(lambda)
  double bg_bias = 0.0;       // appended background logit, scaled by sigma
  double temperature = 0.05;  // tau > 0
  double momentum = 0.9;      // EMA momentum m in [0,1)
  FusionWeights fusion;
  bool use_align = false;
  bool align_per_class = false;
  bool freeze_mem = true;

  static PdaParams identity(std::size_t dim);
  std::size_t dim() const { return projection.rows; }
};

// Throws NonPositiveTemperature / ConfigInvalid on out-of-range fields.
void validate(const PdaParams& params);

inline constexpr const char* kToolVersion = "pda 0.1.0";

}  // namespace pda
