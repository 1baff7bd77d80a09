#include "pda/types.hpp"

#include <cmath>
#include <string>

#include "pda/core.hpp"

namespace pda {
namespace {

void check_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigInvalid(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

FeatureVector matvec(const Matrix& m, std::span<const double> v) {
  if (m.cols != v.size()) {
    throw DimensionMismatch("matvec: " + std::to_string(m.cols) + " cols vs vector " +
                            std::to_string(v.size()));
  }
  FeatureVector out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

RoiFeatureMap::RoiFeatureMap(std::size_t channels, std::size_t height, std::size_t width)
    : channels_(channels), height_(height), width_(width), data_(channels * height * width, 0.0) {
  if (channels == 0 || height == 0 || width == 0) {
    throw ConfigInvalid("RoiFeatureMap: zero dimension");
  }
}

RoiFeatureMap::RoiFeatureMap(std::size_t channels, std::size_t height, std::size_t width,
                             std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels == 0 || height == 0 || width == 0) {
    throw ConfigInvalid("RoiFeatureMap: zero dimension");
  }
  if (data_.size() != channels * height * width) {
    throw DimensionMismatch("RoiFeatureMap: data size " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(channels * height * width));
  }
  check_finite(data_, "RoiFeatureMap");
}

PrototypeMemory::PrototypeMemory(std::size_t num_classes, std::size_t slots_per_class,
                                 std::size_t dim, std::vector<double> prototypes, bool frozen)
    : num_classes_(num_classes),
      slots_per_class_(slots_per_class),
      dim_(dim),
      prototypes_(std::move(prototypes)),
      frozen_(frozen) {
  if (num_classes == 0 || slots_per_class == 0 || dim == 0) {
    throw ConfigInvalid("PrototypeMemory: zero dimension");
  }
  if (prototypes_.size() != num_classes * slots_per_class * dim) {
    throw DimensionMismatch("PrototypeMemory: payload size " +
                            std::to_string(prototypes_.size()));
  }
  check_finite(prototypes_, "PrototypeMemory");
  for (std::size_t c = 0; c < num_classes_; ++c) {
    for (std::size_t k = 0; k < slots_per_class_; ++k) {
      const double norm = l2_norm(slot(c, k));
      if (std::abs(norm - 1.0) > 1e-6) {
        throw ConfigInvalid("PrototypeMemory: slot (" + std::to_string(c) + "," +
                            std::to_string(k) + ") norm " + std::to_string(norm));
      }
    }
  }
}

std::span<const double> PrototypeMemory::slot(std::size_t class_id, std::size_t slot) const {
  if (class_id >= num_classes_ || slot >= slots_per_class_) {
    throw DimensionMismatch("PrototypeMemory::slot: index out of range");
  }
  return {prototypes_.data() + (class_id * slots_per_class_ + slot) * dim_, dim_};
}

void PrototypeMemory::set_slot(std::size_t class_id, std::size_t slot,
                               std::span<const double> value) {
  if (frozen_) throw MemoryFrozen("set_slot: memory is frozen");
  if (class_id >= num_classes_ || slot >= slots_per_class_) {
    throw DimensionMismatch("set_slot: index out of range");
  }
  if (value.size() != dim_) throw DimensionMismatch("set_slot: wrong dimension");
  const double norm = l2_norm(value);
  if (std::abs(norm - 1.0) > 1e-6) {
    throw ConfigInvalid("set_slot: value norm " + std::to_string(norm));
  }
  double* dst = prototypes_.data() + (class_id * slots_per_class_ + slot) * dim_;
  for (std::size_t i = 0; i < dim_; ++i) dst[i] = value[i];
}

PrototypeMemory freeze(PrototypeMemory m) {
  m.frozen_ = true;
  return m;
}

PrototypeMemory thaw(PrototypeMemory m) {
  m.frozen_ = false;
  return m;
}

PdaParams PdaParams::identity(std::size_t dim) {
  PdaParams p;
  p.projection = Matrix::identity(dim);
  return p;
}

void validate(const PdaParams& params) {
  if (!(params.temperature > 0.0)) {
    throw NonPositiveTemperature("temperature " + std::to_string(params.temperature));
  }
  if (params.momentum < 0.0 || params.momentum >= 1.0) {
    throw ConfigInvalid("momentum " + std::to_string(params.momentum) + " not in [0,1)");
  }
  if (params.projection.rows != params.projection.cols) {
    throw DimensionMismatch("projection must be square");
  }
  check_finite(params.projection.data, "projection");
}

}  // namespace pda
