#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "tmpdir.hpp"
#include "vdls/checkpoint.hpp"
#include "vdls/ensemble.hpp"
#include "vdls/serialize.hpp"

using namespace vdls;
namespace fs = std::filesystem;

TEST_CASE("volume raw + JSON roundtrip is bit-exact") {
  const auto dir = vdls::testing::fresh_dir("persist_volume");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> d(-3.0f, 3.0f);
  Volume v;
  v.extents = {5, 3, 7};
  v.value_range = {-3.0, 3.0};
  v.params = SimParams{{1.5, 0.25, 0.75, 0.1}, ParameterSpace::synthetic_default()};
  for (int i = 0; i < 105; ++i) v.values.push_back(d(rng));
  v.values[4] = -0.0f;
  v.values[5] = 1e-42f;  // subnormal
  save_volume(dir / "vol", v);
  CHECK(fs::file_size(dir / "vol.raw") == 105 * sizeof(float));
  for (const auto& p : {dir / "vol", dir / "vol.json", dir / "vol.raw"}) {
    const auto back = load_volume(p);
    CHECK(back.extents == v.extents);
    CHECK(back.value_range == v.value_range);
    REQUIRE(back.params.has_value());
    CHECK(back.params->values == v.params->values);
    CHECK(std::memcmp(back.values.data(), v.values.data(), v.values.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("volume loader rejects a truncated raw file") {
  const auto dir = vdls::testing::fresh_dir("persist_truncated");
  Volume v;
  v.extents = {2, 2, 2};
  v.values.assign(8, 1.0f);
  v.value_range = {0.0, 1.0};
  save_volume(dir / "vol", v);
  fs::resize_file(dir / "vol.raw", 20);
  CHECK_THROWS_WITH_AS(load_volume(dir / "vol"), doctest::Contains("vol.raw"), std::exception);
}

TEST_CASE("checkpoint records roundtrip and corruption is detected") {
  std::vector<TensorRecord> recs{{"a.weight", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"a.u", {2}, {0.6f, -0.8f}},
                                 {"scalar", {}, {7.5f}}};
  std::stringstream buf;
  write_checkpoint(buf, recs);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "VDLS");
  std::stringstream in(bytes);
  const auto back = read_checkpoint(in);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == recs[i].name);
    CHECK(back[i].shape == recs[i].shape);
    CHECK(back[i].values == recs[i].values);
  }
  CHECK(checkpoint_digest(back) == checkpoint_digest(recs));

  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_WITH_AS(read_checkpoint(cut), doctest::Contains("truncated"), std::exception);
  std::stringstream bad("XXXX" + bytes.substr(4));
  CHECK_THROWS_WITH_AS(read_checkpoint(bad), doctest::Contains("magic"), std::exception);
}

TEST_CASE("artifact paths") {
  CHECK(artifact_path("models/rae", ".json") == fs::path("models/rae.json"));
  CHECK(artifact_path("models/rae.vdls", ".json") == fs::path("models/rae.json"));
  CHECK(artifact_path("models/rae.v1", ".vdls") == fs::path("models/rae.v1.vdls"));
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
