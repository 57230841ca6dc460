#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "tmpdir.hpp"
#include "vdls/ensemble.hpp"

using namespace vdls;

namespace {

SimParams params(double p1, double p2, double p3, double p4 = 0.5) {
  return {{p1, p2, p3, p4}, ParameterSpace::synthetic_default()};
}

// Field written out term by term from its definition.
double reference_field(double x, double y, double z, const std::vector<double>& p) {
  const double cx = 0.5 + 0.25 * p[1], wx = 0.5 - 0.25 * p[1];
  const double d1 = (x - cx) * (x - cx) + (y - 0.5) * (y - 0.5) + (z - 0.5) * (z - 0.5);
  const double d2 = (x - wx) * (x - wx) + (y - 0.35) * (y - 0.35) + (z - 0.6) * (z - 0.6);
  const double s2 = 0.1 * (1.0 + p[2]);
  return p[0] * std::exp(-d1 / (2 * 0.15 * 0.15)) + 0.5 * std::exp(-d2 / (2 * s2 * s2)) +
         0.05 * std::sin(8 * std::numbers::pi * x) * std::sin(8 * std::numbers::pi * y);
}

}  // namespace

TEST_CASE("simulate matches the closed-form field at cell centers") {
  const auto p = params(1.3, -0.4, 0.7);
  const auto v = simulate(p, {8, 6, 4});
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = 0; j < 6; ++j)
      for (int64_t k = 0; k < 4; ++k) {
        const double ref = reference_field((i + 0.5) / 8, (j + 0.5) / 6, (k + 0.5) / 4, p.values);
        CHECK(v.at(i, j, k) == doctest::Approx(ref).epsilon(1e-6));
      }
}

TEST_CASE("amplitude term scales 4x between p1 = 0.5 and p1 = 2") {
  const auto c = amplitude_blob_center(0.2);
  const auto lo = synthetic_field_terms(c, {0.5, 0.2, 0.3, 0.0});
  const auto hi = synthetic_field_terms(c, {2.0, 0.2, 0.3, 0.0});
  CHECK(hi.amplitude_blob / lo.amplitude_blob == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(hi.width_blob == lo.width_blob);
  CHECK(hi.ripple == lo.ripple);
  CHECK((hi.total() - lo.total()) == doctest::Approx(1.5 * lo.amplitude_blob / 0.5).epsilon(1e-12));
}

TEST_CASE("simulate is deterministic and ignores the null parameter") {
  const auto a = simulate(params(1.0, 0.1, 0.5, 0.0), {6, 6, 6});
  const auto b = simulate(params(1.0, 0.1, 0.5, 0.0), {6, 6, 6});
  const auto c = simulate(params(1.0, 0.1, 0.5, 1.0), {6, 6, 6});
  CHECK(a.values == b.values);
  CHECK(a.values == c.values);
}

TEST_CASE("simulate rejects out-of-range parameters") {
  CHECK_THROWS(simulate(params(3.0, 0.0, 0.5), {4, 4, 4}));
  CHECK_THROWS(simulate(params(1.0, -1.5, 0.5), {4, 4, 4}));
}

TEST_CASE("split policy for 20 members") {
  const auto s = split_counts(20, 0.2, 0.2);
  CHECK(s.test == 4);
  CHECK(s.rae_train == 4);
  CHECK(s.predictor_train == 12);
}

TEST_CASE("build_ensemble writes members, splits and a covering normalization") {
  const auto dir = vdls::testing::fresh_dir("ensemble");
  EnsembleOptions opt;
  opt.n_members = 20;
  opt.seed = 11;
  opt.extents = {8, 8, 8};
  const auto m = build_ensemble(opt, dir / "a");
  REQUIRE(m.members.size() == 20);
  CHECK(m.indices(Split::Test).size() == 4);
  CHECK(m.indices(Split::RaeTrain).size() == 4);
  CHECK(m.indices(Split::PredictorTrain).size() == 12);
  CHECK(m.training_indices().size() == 16);

  std::set<size_t> all;
  for (auto s : {Split::RaeTrain, Split::PredictorTrain, Split::Test})
    for (auto i : m.indices(s)) CHECK(all.insert(i).second);
  CHECK(all.size() == 20);

  for (size_t i = 0; i < m.members.size(); ++i) {
    const auto v = m.load_member(i);
    for (float x : v.values) {
      CHECK(x >= m.normalization.min);
      CHECK(x <= m.normalization.max);
    }
  }

  const auto again = build_ensemble(opt, dir / "b");
  CHECK(again.normalization == m.normalization);
  for (size_t i = 0; i < 20; ++i) {
    CHECK(again.members[i].params == m.members[i].params);
    CHECK(again.members[i].split == m.members[i].split);
    CHECK(again.load_member(i).values == m.load_member(i).values);
  }

  const auto loaded = load_manifest(dir / "a" / "manifest.json");
  CHECK(loaded.normalization == m.normalization);
  CHECK(loaded.members.size() == 20);
}

TEST_CASE("normalize maps the dataset range onto [-1, 1]") {
  const Normalization n{-2.0, 6.0};
  CHECK(normalize_value(-2.0, n) == -1.0f);
  CHECK(normalize_value(6.0, n) == 1.0f);
  CHECK(normalize_value(2.0, n) == 0.0f);
  CHECK_THROWS(normalize(Volume{}, Normalization{1.0, 1.0}));

  auto v = simulate(params(1.7, 0.3, 0.2), {5, 5, 5});
  const Normalization range{-0.1, 1.9};
  const auto back = denormalize(normalize(v, range), range);
  for (size_t i = 0; i < v.values.size(); ++i) CHECK(std::abs(back.values[i] - v.values[i]) < 1e-5);
}
