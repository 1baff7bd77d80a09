#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pda/align.hpp"
#include "pda/core.hpp"
#include "pda/rng.hpp"
#include "pda/scoring.hpp"
#include "support/instances.hpp"

using namespace pda;

namespace {

OffsetField constant_field(std::size_t height, std::size_t width, double dx, double dy,
                           double bound = 4.0) {
  OffsetField field;
  field.height = height;
  field.width = width;
  field.bound = bound;
  field.dx.assign(height * width, dx);
  field.dy.assign(height * width, dy);
  return field;
}

}  // namespace

TEST_CASE("predict_offsets: zero init gives the identity field") {
  const AlignerParams aligner = AlignerParams::zeros(3, 4, 2, 2);
  Rng rng(31);
  std::vector<double> cells(3 * 2 * 2);
  for (auto& c : cells) c = rng.gaussian();
  const OffsetField field =
      predict_offsets(RoiFeatureMap(3, 2, 2, cells), rng.unit_vector(4), aligner);
  for (double v : field.dx) CHECK(v == 0.0);
  for (double v : field.dy) CHECK(v == 0.0);
}

TEST_CASE("predict_offsets: bound holds for huge weights") {
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    AlignerParams aligner = AlignerParams::zeros(2, 3, 3, 3);
    for (auto& w : aligner.weight) w = rng.uniform(-1e3, 1e3);
    std::vector<double> cells(2 * 3 * 3);
    for (auto& c : cells) c = rng.gaussian();
    const double bound = rng.uniform(0.1, 2.0);
    const OffsetField field =
        predict_offsets(RoiFeatureMap(2, 3, 3, cells), rng.unit_vector(3), aligner, bound);
    for (double v : field.dx) CHECK(std::abs(v) <= bound);
    for (double v : field.dy) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("predict_offsets: deterministic and dimension-checked") {
  Rng rng(33);
  AlignerParams aligner = AlignerParams::zeros(2, 3, 2, 3);
  for (auto& w : aligner.weight) w = rng.gaussian();
  std::vector<double> cells(2 * 2 * 3);
  for (auto& c : cells) c = rng.gaussian();
  const RoiFeatureMap fmap(2, 2, 3, cells);
  const FeatureVector proto = rng.unit_vector(3);

  const OffsetField a = predict_offsets(fmap, proto, aligner);
  const OffsetField b = predict_offsets(fmap, proto, aligner);
  CHECK(a.dx == b.dx);
  CHECK(a.dy == b.dy);

  CHECK_THROWS_AS(predict_offsets(fmap, rng.unit_vector(4), aligner), DimensionMismatch);
  CHECK_THROWS_AS(predict_offsets(RoiFeatureMap(3, 2, 3), proto, aligner), DimensionMismatch);
}

TEST_CASE("grid_sample: zero offsets copy the map exactly") {
  Rng rng(34);
  std::vector<double> cells(4 * 3 * 5);
  for (auto& c : cells) c = rng.gaussian();
  const RoiFeatureMap fmap(4, 3, 5, cells);
  const RoiFeatureMap out = grid_sample(fmap, constant_field(3, 5, 0.0, 0.0));
  CHECK(out.data() == fmap.data());  // bit-exact
}

TEST_CASE("grid_sample: hand-computed shifts with border clamp") {
  const RoiFeatureMap row(1, 1, 3, {10.0, 20.0, 30.0});
  const RoiFeatureMap shifted = grid_sample(row, constant_field(1, 3, 1.0, 0.0));
  CHECK(shifted.at(0, 0, 0) == 20.0);
  CHECK(shifted.at(0, 0, 1) == 30.0);
  CHECK(shifted.at(0, 0, 2) == 30.0);  // clamped to the border

  const RoiFeatureMap pair(1, 1, 2, {0.0, 2.0});
  const RoiFeatureMap half = grid_sample(pair, constant_field(1, 2, 0.5, 0.0));
  CHECK(half.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(half.at(0, 0, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("grid_sample: integer offsets equal an index-shift oracle") {
  Rng rng(35);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t channels = 1 + rng.index(3);
    const std::size_t height = 2 + rng.index(4);
    const std::size_t width = 2 + rng.index(4);
    std::vector<double> cells(channels * height * width);
    for (auto& c : cells) c = rng.gaussian();
    const RoiFeatureMap fmap(channels, height, width, cells);

    OffsetField field = constant_field(height, width, 0.0, 0.0, 8.0);
    for (auto& v : field.dx) v = static_cast<double>(rng.index(7)) - 3.0;
    for (auto& v : field.dy) v = static_cast<double>(rng.index(7)) - 3.0;

    const RoiFeatureMap warped = grid_sample(fmap, field);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const std::size_t j = y * width + x;
          long sy = static_cast<long>(y) + static_cast<long>(field.dy[j]);
          long sx = static_cast<long>(x) + static_cast<long>(field.dx[j]);
          sy = std::clamp<long>(sy, 0, static_cast<long>(height) - 1);
          sx = std::clamp<long>(sx, 0, static_cast<long>(width) - 1);
          CHECK(warped.at(c, y, x) ==
                fmap.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
        }
      }
    }
  }
}

TEST_CASE("grid_sample is linear in the map for fixed offsets") {
  Rng rng(36);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t channels = 2, height = 3, width = 4;
    std::vector<double> fa(channels * height * width), ga(fa.size());
    for (auto& v : fa) v = rng.gaussian();
    for (auto& v : ga) v = rng.gaussian();
    OffsetField field = constant_field(height, width, 0.0, 0.0, 2.0);
    for (auto& v : field.dx) v = rng.uniform(-1.5, 1.5);
    for (auto& v : field.dy) v = rng.uniform(-1.5, 1.5);

    const double s = rng.uniform(-2.0, 2.0), t = rng.uniform(-2.0, 2.0);
    std::vector<double> mix(fa.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = s * fa[i] + t * ga[i];

    const RoiFeatureMap wa = grid_sample(RoiFeatureMap(channels, height, width, fa), field);
    const RoiFeatureMap wb = grid_sample(RoiFeatureMap(channels, height, width, ga), field);
    const RoiFeatureMap wm = grid_sample(RoiFeatureMap(channels, height, width, mix), field);
    for (std::size_t i = 0; i < mix.size(); ++i) {
      CHECK(std::abs(wm.data()[i] - (s * wa.data()[i] + t * wb.data()[i])) < 1e-9);
    }
  }
}

TEST_CASE("aligned_class_scores: zero-initialized aligner changes nothing") {
  for (std::uint64_t seed = 600; seed < 625; ++seed) {
    auto inst = testsup::make_instance(seed, true, seed % 2 == 0, 1);
    inst.aligner.weight.assign(inst.aligner.weight.size(), 0.0);
    const auto& item = inst.batch[0];

    const FeatureVector z0 = project_and_normalize(item.feature, inst.params.projection);
    const SlotRef best = select_global_best(z0, inst.memory);
    const ClassScores aligned =
        aligned_class_scores(item.fmap, z0, inst.memory, inst.params, inst.aligner, best);

    // With an identity warp the pooled map replaces the feature; both live in
    // the same space only when the map actually carries the feature, so
    // compare against the unaligned scores of the pooled vector.
    const ClassScores plain = best_of_k(
        project_and_normalize(global_average_pool(item.fmap), inst.params.projection),
        inst.memory);
    for (std::size_t c = 0; c < plain.values.size(); ++c) {
      CHECK(std::abs(aligned.values[c] - plain.values[c]) < 1e-9);
    }
  }
}

TEST_CASE("aligned_class_scores: saturated integer warp matches a manual oracle") {
  // 2 classes, K=1, dim 4, 4x3x3 map. The aligner weights saturate tanh via
  // the prototype input block, so every dx is exactly +1 and dy exactly 0.
  Rng rng(37);
  const FeatureVector p0 = rng.unit_vector(4);
  const FeatureVector p1 = rng.unit_vector(4);
  std::vector<double> slots(p0.begin(), p0.end());
  slots.insert(slots.end(), p1.begin(), p1.end());
  const PrototypeMemory memory(2, 1, 4, slots);

  std::vector<double> cells(4 * 3 * 3);
  for (auto& c : cells) c = rng.gaussian();
  const RoiFeatureMap fmap(4, 3, 3, cells);

  PdaParams params = PdaParams::identity(4);
  AlignerParams aligner = AlignerParams::zeros(4, 4, 3, 3);
  const std::size_t cells_n = 9;
  for (std::size_t j = 0; j < cells_n; ++j) {
    // dx plane: driven to +inf by the first prototype coordinate
    aligner.weight[(4 + 0) * (2 * cells_n) + j] = 60.0 / p0[0];
  }

  const FeatureVector z0 = p0;  // exact match: global best is (0, 0)
  const SlotRef best = select_global_best(z0, memory);
  REQUIRE(best.class_id == 0);
  REQUIRE(best.slot == 0);

  const OffsetField field = predict_offsets(fmap, p0, aligner);
  for (double v : field.dx) CHECK(v == 1.0);  // tanh saturated exactly
  for (double v : field.dy) CHECK(v == 0.0);

  const ClassScores got = aligned_class_scores(fmap, z0, memory, params, aligner, best);

  // Manual: shift columns left by one with border clamp, mean, normalize, dot.
  std::vector<double> pooled(4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) {
    double acc = 0.0;
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t x = 0; x < 3; ++x) {
        const std::size_t sx = x + 1 < 3 ? x + 1 : 2;
        acc += cells[(c * 3 + y) * 3 + sx];
      }
    }
    pooled[c] = acc / 9.0;
  }
  double norm = 0.0;
  for (double v : pooled) norm += v * v;
  norm = std::sqrt(norm);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    const auto& proto = cls == 0 ? p0 : p1;
    double dot_val = 0.0;
    for (std::size_t i = 0; i < 4; ++i) dot_val += pooled[i] / norm * proto[i];
    dot_val = std::clamp(dot_val, -1.0, 1.0);
    CHECK(got.values[cls] == doctest::Approx(dot_val).epsilon(1e-12));
  }
}

TEST_CASE("alignment leaves a dead fused branch untouched") {
  auto inst = testsup::make_instance(700, true, false, 1);
  inst.params.fusion = {0.0, 1.0, 0.0};
  const auto& item = inst.batch[0];
  const ScoreResult with_align = score_roi(item.feature, item.fmap, inst.memory, inst.params,
                                           &inst.aligner, item.z_cls, nullptr);
  inst.params.use_align = false;
  const ScoreResult without = score_roi(item.feature, item.fmap, inst.memory, inst.params,
                                        nullptr, item.z_cls, nullptr);
  for (std::size_t i = 0; i < with_align.probabilities.size(); ++i) {
    CHECK(with_align.probabilities[i] == without.probabilities[i]);
  }
}
