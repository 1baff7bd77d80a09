#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pda/core.hpp"
#include "pda/rng.hpp"

using namespace pda;

TEST_CASE("l2_normalize basic values") {
  const FeatureVector out = l2_normalize({3.0, 4.0});
  CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.8).epsilon(1e-12));

  const FeatureVector e1 = l2_normalize({1.0, 0.0, 0.0});
  CHECK(e1[0] == 1.0);
  CHECK(e1[1] == 0.0);

  CHECK_THROWS_AS(l2_normalize({0.0, 0.0}), DegenerateVector);
  CHECK_THROWS_AS(l2_normalize({1e-13, 0.0}), DegenerateVector);
}

TEST_CASE("l2_normalize is idempotent and unit") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    FeatureVector v(3 + rng.index(12));
    for (auto& x : v) x = rng.uniform(-5.0, 5.0);
    if (l2_norm(v) < 1e-9) continue;
    const FeatureVector once = l2_normalize(v);
    const FeatureVector twice = l2_normalize(once);
    CHECK(std::abs(l2_norm(once) - 1.0) < 1e-9);
    for (std::size_t j = 0; j < v.size(); ++j) CHECK(std::abs(once[j] - twice[j]) < 1e-9);
  }
}

TEST_CASE("cosine on axis vectors") {
  const FeatureVector e1{1.0, 0.0}, e2{0.0, 1.0}, neg_e1{-1.0, 0.0};
  CHECK(cosine(e1, e1) == 1.0);
  CHECK(cosine(e1, e2) == 0.0);
  CHECK(cosine(e1, neg_e1) == -1.0);
  CHECK_THROWS_AS(cosine(e1, FeatureVector{1.0, 0.0, 0.0}), DimensionMismatch);
}

TEST_CASE("cosine symmetry, self-similarity, clamping") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const FeatureVector a = rng.unit_vector(8);
    const FeatureVector b = rng.unit_vector(8);
    CHECK(cosine(a, b) == cosine(b, a));
    CHECK(std::abs(cosine(a, a) - 1.0) < 1e-9);
    CHECK(cosine(a, b) <= 1.0);
    CHECK(cosine(a, b) >= -1.0);
  }
}

TEST_CASE("global_average_pool values") {
  CHECK(global_average_pool(RoiFeatureMap(1, 1, 1, {7.0}))[0] == 7.0);
  CHECK(global_average_pool(RoiFeatureMap(1, 2, 2, {1.0, 2.0, 3.0, 4.0}))[0] == 2.5);
  const FeatureVector zero = global_average_pool(RoiFeatureMap(3, 2, 2));
  for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("global_average_pool is linear") {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    const std::size_t c = 1 + rng.index(4), h = 1 + rng.index(4), w = 1 + rng.index(4);
    std::vector<double> fa(c * h * w), ga(c * h * w);
    for (auto& x : fa) x = rng.gaussian();
    for (auto& x : ga) x = rng.gaussian();
    const double s = rng.uniform(-2.0, 2.0), t = rng.uniform(-2.0, 2.0);
    std::vector<double> mix(c * h * w);
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = s * fa[j] + t * ga[j];
    const FeatureVector pf = global_average_pool(RoiFeatureMap(c, h, w, fa));
    const FeatureVector pg = global_average_pool(RoiFeatureMap(c, h, w, ga));
    const FeatureVector pm = global_average_pool(RoiFeatureMap(c, h, w, mix));
    for (std::size_t j = 0; j < c; ++j) {
      CHECK(std::abs(pm[j] - (s * pf[j] + t * pg[j])) < 1e-9);
    }
  }
}

TEST_CASE("domain type construction rejects bad input") {
  CHECK_THROWS_AS(RoiFeatureMap(0, 1, 1), ConfigInvalid);
  CHECK_THROWS_AS(RoiFeatureMap(1, 1, 2, {1.0}), DimensionMismatch);
  CHECK_THROWS_AS(RoiFeatureMap(1, 1, 1, {std::nan("")}), ConfigInvalid);

  CHECK_THROWS_AS(PrototypeMemory(1, 1, 2, {2.0, 0.0}), ConfigInvalid);  // not unit
  CHECK_THROWS_AS(PrototypeMemory(1, 1, 2, {1.0}), DimensionMismatch);

  PdaParams params = PdaParams::identity(3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(params.projection.at(i, i) == 1.0);
  params.temperature = 0.0;
  CHECK_THROWS_AS(validate(params), NonPositiveTemperature);
  params.temperature = 0.5;
  params.momentum = 1.0;
  CHECK_THROWS_AS(validate(params), ConfigInvalid);
}
