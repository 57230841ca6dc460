#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "tmpdir.hpp"
#include "vdls/ops.hpp"
#include "vdls/predictor.hpp"

using namespace vdls;

namespace {

PredictorConfig tiny_config() {
  PredictorConfig c;
  c.k_v = 2;
  c.image_stages = 2;
  c.depth_stages = 1;
  c.learning_rate = 2e-3f;
  c.epochs = 30;
  c.seed = 3;
  return c;
}

const ViewConfig kView{.axis = 2, .sign = 1, .width = 8, .height = 8, .ray_length = 16};

// Latent targets that vary smoothly with the first two parameters.
std::vector<LatentSample> toy_samples(int n, uint64_t seed) {
  const auto space = ParameterSpace::synthetic_default();
  std::mt19937_64 rng(seed);
  std::vector<LatentSample> out;
  for (int s = 0; s < n; ++s) {
    std::vector<double> p;
    for (const auto& r : space.ranges) p.push_back(std::uniform_real_distribution<double>(r.min, r.max)(rng));
    std::vector<float> v(8 * 8 * 2 * 3);
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<float>(0.3 * std::sin(0.1 * i + p[1]) * (p[0] - 1.0));
    }
    Tensor batch({64, 3, 2}, std::move(v));
    out.push_back({p, RayLatentField::from_latent_batch(batch, kView)});
  }
  return out;
}

}  // namespace

TEST_CASE("predictor shape ledger") {
  PredictorConfig desk;
  desk.k_v = 4;
  desk.image_stages = 3;
  desk.depth_stages = 1;
  const auto s = predictor_shapes(desk, 64, 64, 4, 3);
  CHECK(s.seed == std::array<int64_t, 4>{8, 8, 2, 64});
  CHECK(s.output == std::array<int64_t, 4>{64, 64, 4, 3});

  PredictorConfig full = desk;
  full.image_stages = 6;
  full.depth_stages = 3;
  const auto f = predictor_shapes(full, 384, 384, 512 / 16, 3);
  CHECK(f.seed == std::array<int64_t, 4>{6, 6, 4, 64});
  CHECK(f.output == std::array<int64_t, 4>{384, 384, 32, 3});

  CHECK_THROWS(predictor_shapes(desk, 60, 64, 4, 3));
  CHECK_THROWS(predictor_shapes(full, 384, 384, 4, 3));
}

TEST_CASE("predictor output is tanh-bounded with the declared extents") {
  VDLPredictor p(tiny_config(), ParameterSpace::synthetic_default(), 8, 8, 2, 3);
  auto z = p.forward(Tensor({4}, std::vector<float>{1.0f, 0.0f, 0.5f, 0.5f}));
  CHECK(z.shape() == Shape{1, 3, 8, 8, 2});
  for (float v : z.values()) CHECK(std::abs(v) < 1.0f);
}

TEST_CASE("predictor gradient with respect to the raw parameters matches finite differences") {
  auto cfg = tiny_config();
  VDLPredictor model(cfg, ParameterSpace::synthetic_default(), 8, 8, 2, 3);
  std::mt19937_64 rng(8);
  auto op = [&](const std::vector<Tensor>& in) { return model.forward(in[0]); };
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<float> p{std::uniform_real_distribution<float>(0.7f, 1.8f)(rng),
                         std::uniform_real_distribution<float>(-0.8f, 0.8f)(rng), 0.4f, 0.6f};
    // Thousands of ReLUs: some pre-activation may sit within one step of its
    // kink, so take the best agreement over a few steps (same projection).
    const auto seed = rng();
    double best = 1e9;
    for (double h : {1e-3, 3e-4, 1e-4}) {
      std::mt19937_64 r(seed);
      best = std::min(best, vdls::testing::gradcheck(op, {Tensor({4}, p)}, r, h).max_rel_error);
    }
    CAPTURE(best);
    CHECK(best < 1e-2);
  }
}

TEST_CASE("input group shrink is a per-column soft threshold") {
  VDLPredictor model(tiny_config(), ParameterSpace::synthetic_default(), 8, 8, 2, 3);
  const auto before = model.input_weight_norms();
  REQUIRE(before.size() == 4);
  const double amount = before[2] / 2.0;
  model.shrink_input_groups(amount);
  const auto after = model.input_weight_norms();
  for (size_t c = 0; c < 4; ++c) {
    CAPTURE(c);
    CHECK(after[c] == doctest::Approx(std::max(0.0, before[c] - amount)).epsilon(1e-5));
  }
  model.shrink_input_groups(1e9);
  for (double n : model.input_weight_norms()) CHECK(n == 0.0);
  // With no lift weights left the output ignores the parameters.
  auto a = model.forward(Tensor({4}, std::vector<float>{0.6f, -0.9f, 0.1f, 0.2f}));
  auto b = model.forward(Tensor({4}, std::vector<float>{1.9f, 0.8f, 0.9f, 0.7f}));
  CHECK(a.vec() == b.vec());
}

TEST_CASE("predictor training lowers the loss and is seed-deterministic") {
  const auto samples = toy_samples(6, 1);
  const auto space = ParameterSpace::synthetic_default();
  VDLPredictor a(tiny_config(), space, 8, 8, 2, 3), b(tiny_config(), space, 8, 8, 2, 3);
  const auto ra = train_predictor(a, samples);
  const auto rb = train_predictor(b, samples);
  CHECK_FALSE(ra.diverged);
  CHECK(ra.loss_curve.back() < ra.loss_curve.front());
  CHECK(checkpoint_digest(a.state()) == checkpoint_digest(b.state()));
  CHECK(ra.loss_curve == rb.loss_curve);
}

TEST_CASE("predicted field matches the encoded extents and is deterministic") {
  const auto dir = vdls::testing::fresh_dir("predictor");
  PredictorCheckpoint ck;
  ck.config = tiny_config();
  ck.view = kView;
  ck.normalization = {0.0, 1.0};
  ck.rae_id = "rae";
  ck.model = std::make_shared<VDLPredictor>(ck.config, ParameterSpace::synthetic_default(), 8, 8, 2, 3);
  const SimParams p{{1.2, 0.1, 0.3, 0.9}, ParameterSpace::synthetic_default()};
  const auto a = predict_latent(p, ck);
  const auto b = predict_latent(p, ck);
  const auto target = toy_samples(1, 2)[0].latents;
  CHECK(a.latents.shape() == target.shape());
  CHECK(a.latents.values == b.latents.values);
  CHECK_FALSE(a.extrapolated);
  CHECK(predict_latent({{2.5, 0.1, 0.3, 0.9}, p.space}, ck).extrapolated);
  CHECK_THROWS(predict_latent({{1.0, 0.0}, p.space}, ck));

  save_predictor(dir / "pred", ck);
  const auto back = load_predictor(dir / "pred");
  CHECK(back.rae_id == "rae");
  CHECK(predict_latent(p, back).latents.values == a.latents.values);
}
