#include <doctest.h>

#include <fstream>

#include "tiny_run.hpp"
#include "vdls/pipeline.hpp"
#include "vdls/serialize.hpp"

using namespace vdls;
namespace fs = std::filesystem;

TEST_CASE("desk config validates and survives a JSON roundtrip") {
  const auto desk = PipelineConfig::desk();
  CHECK_NOTHROW(desk.validate());
  CHECK(desk.rae.channels == 8);
  CHECK(desk.predictor.k_v == 4);
  CHECK(desk.ensemble.n_members == 20);
  nlohmann::json j = desk;
  const auto back = j.get<PipelineConfig>();
  CHECK(config_hash(back) == config_hash(desk));
  const auto views = desk.views();
  REQUIRE(views.size() == 3);
  for (int a = 0; a < 3; ++a) {
    CHECK(views[static_cast<size_t>(a)].axis == a);
    CHECK(views[static_cast<size_t>(a)].ray_length == 64);
  }
}

TEST_CASE("config hash ignores the run directory but not the model settings") {
  auto a = PipelineConfig::desk();
  auto b = a;
  b.run_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.rae.epochs += 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("config errors name the offending field") {
  const auto dir = vdls::testing::fresh_dir("config");
  auto write = [&](const std::string& body) {
    std::ofstream(dir / "c.json") << body;
    return dir / "c.json";
  };
  CHECK_THROWS_WITH_AS(load_pipeline_config(write(R"({"rea": {}})")), doctest::Contains("rea"), std::exception);
  CHECK_THROWS_WITH_AS(load_pipeline_config(write(R"({"rae": {"chanels": 4}})")), doctest::Contains("chanels"),
                       std::exception);
  CHECK_THROWS_WITH_AS(load_pipeline_config(write(R"({"rae": {"stages": 7}})")), doctest::Contains("divisible"),
                       std::exception);
  CHECK_THROWS_WITH_AS(load_pipeline_config(write(R"({"predictor": {"image_stages": 7}})")),
                       doctest::Contains("2^"), std::exception);
  CHECK_THROWS(load_pipeline_config(write("{not json")));
  const auto ok = load_pipeline_config(write(R"({"rae": {"epochs": 3}})"));
  CHECK(ok.rae.epochs == 3);
  CHECK(ok.rae.channels == 8);
}

TEST_CASE("stages report missing inputs with the producing command") {
  auto cfg = vdls::testing::tiny_config(vdls::testing::fresh_dir("missing"));
  CHECK_THROWS_WITH_AS(run_train_rae(cfg), doctest::Contains("gen-ensemble"), std::exception);
  run_gen_ensemble(cfg);
  CHECK_THROWS_WITH_AS(run_encode_latents(cfg), doctest::Contains("train-rae"), std::exception);
  CHECK_THROWS_WITH_AS(run_evaluate(cfg), doctest::Contains("train-rae"), std::exception);
}

TEST_CASE("tiny pipeline runs end to end") {
  const auto cfg = vdls::testing::tiny_run("pipeline");
  const RunLayout layout{cfg.run_dir};
  for (int a = 0; a < 3; ++a) {
    CHECK(fs::exists(layout.rae(a).string() + ".json"));
    CHECK(fs::exists(layout.predictor(a).string() + ".vdls"));
  }
  const auto rae_summary = read_json_file(layout.summary("train-rae"));
  CHECK(rae_summary.at("config_hash") == config_hash(cfg));

  const auto eval = run_evaluate(cfg);
  CHECK(eval.contains("members"));
  CHECK(fs::exists(cfg.run_dir / "evaluation" / "evaluation.json"));

  const auto sens = run_sensitivity(cfg);
  REQUIRE(sens.at("curves").size() == 4);
  for (const auto& c : sens.at("curves")) {
    std::ifstream in(c.at("csv").get<std::string>());
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "parameter_value,sensitivity");
    while (std::getline(in, line)) ++rows;
    CHECK(rows == cfg.sensitivity_samples);
  }

  // A changed config is refused unless forced.
  auto other = cfg;
  other.rae.learning_rate *= 2;
  CHECK_THROWS_WITH_AS(run_evaluate(other), doctest::Contains("config"), std::exception);
  CHECK_NOTHROW(run_evaluate(other, true));
}
