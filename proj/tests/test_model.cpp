#include <cmath>
#include <memory>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "spnet/errors.hpp"
#include "spnet/model.hpp"
#include "spnet/synthgen.hpp"
#include "spnet/train.hpp"
#include "test_util.hpp"

using namespace spnet;

namespace {

Tensor random_tensor(Rng& rng, int n, int c, int h, int w) {
  Tensor t(n, c, h, w);
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Checks input and parameter gradients of f(x) = Σ r·layer(x) by central differences.
void check_layer(Layer& layer, Tensor x, Rng& rng, bool training,
                 const std::function<void()>& before_forward = {}) {
  auto run = [&](const Tensor& in) {
    if (before_forward) before_forward();
    return layer.forward(in, training);
  };
  const Tensor y = run(x);
  const Tensor r = random_tensor(rng, y.n, y.c, y.h, y.w);
  for (Parameter* p : layer.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  run(x);
  const Tensor gx = layer.backward(r);
  REQUIRE(gx.same_shape(x));

  const auto fd_x = oracle::central_differences(
      x.data,
      [&](const std::vector<double>& v) {
        Tensor t = x;
        t.data = v;
        return dot(run(t), r);
      },
      1e-5);
  CHECK(oracle::relative_error(gx.data, fd_x) < 1e-7);

  for (Parameter* p : layer.parameters()) {
    const std::vector<double> analytic = p->grad;
    const auto fd_p = oracle::central_differences(
        p->value,
        [&](const std::vector<double>& v) {
          const std::vector<double> keep = p->value;
          p->value = v;
          const double out = dot(run(x), r);
          p->value = keep;
          return out;
        },
        1e-5);
    CHECK(oracle::relative_error(analytic, fd_p) < 1e-7);
  }
}

Tensor random_input(Rng& rng, int n, int size) {
  Tensor t(n, 1, size, size);
  for (double& v : t.data) v = rng.uniform(0.0, 1.0);
  return t;
}

// Relative error of the end-to-end parameter gradient of Σ r·model(x).
double model_gradient_error(Detector& model, const Tensor& x, Rng& rng, bool training) {
  const Tensor y = model.forward(x, training);
  const Tensor r = random_tensor(rng, y.n, y.c, y.h, y.w);
  model.zero_grad();
  model.forward(x, training);
  model.backward(r);
  const std::vector<double> analytic = model.flat_gradients();
  const std::vector<double> theta = model.flat_parameters();
  const auto fd = oracle::central_differences(
      theta,
      [&](const std::vector<double>& v) {
        model.set_flat_parameters(v);
        return dot(model.forward(x, training), r);
      },
      1e-5);
  model.set_flat_parameters(theta);
  return oracle::relative_error(analytic, fd);
}

std::vector<Scene> desk_scenes(int n, std::uint64_t seed) {
  SceneConfig cfg = SceneConfig::desk();
  cfg.seed = seed;
  std::vector<Scene> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_scene(scene_config_for_index(cfg, i)));
  return out;
}

}  // namespace

TEST_CASE("layer gradients match central differences") {
  Rng rng(1);
  SUBCASE("conv2d") {
    Conv2d conv("c", 2, 3, 3);
    conv.init(rng, 1.0);
    for (double& b : conv.bias().value) b = rng.uniform(-0.5, 0.5);
    check_layer(conv, random_tensor(rng, 2, 2, 5, 6), rng, true);
  }
  SUBCASE("conv2d 1x1 and 5x5") {
    Conv2d c1("c", 3, 2, 1);
    c1.init(rng, 1.0);
    check_layer(c1, random_tensor(rng, 2, 3, 4, 4), rng, true);
    Conv2d c5("c", 1, 2, 5);
    c5.init(rng, 1.0);
    check_layer(c5, random_tensor(rng, 1, 1, 6, 5), rng, true);
  }
  SUBCASE("avgpool") {
    AvgPool2 pool;
    check_layer(pool, random_tensor(rng, 2, 2, 6, 7), rng, true);
  }
  SUBCASE("tile") {
    Tile tile(3);
    check_layer(tile, random_tensor(rng, 2, 1, 3, 3), rng, true);
  }
  SUBCASE("leaky relu") {
    LeakyReLU act(0.1);
    check_layer(act, random_tensor(rng, 2, 2, 3, 3), rng, true);
  }
  SUBCASE("dropout") {
    Dropout drop(0.3, 5);
    check_layer(drop, random_tensor(rng, 2, 2, 3, 3), rng, true, [&] { drop.reseed(5); });
  }
  SUBCASE("dense") {
    Dense dense("d", 12, 5);
    dense.init(rng, 1.0);
    check_layer(dense, random_tensor(rng, 3, 3, 2, 2), rng, true);
  }
  SUBCASE("batchnorm training") {
    BatchNorm2d bn("bn", 3);
    for (Parameter* p : bn.parameters()) {
      for (double& v : p->value) v = rng.uniform(0.5, 1.5);
    }
    check_layer(bn, random_tensor(rng, 3, 3, 2, 3), rng, true);
  }
  SUBCASE("batchnorm inference") {
    BatchNorm2d bn("bn", 2);
    bn.forward(random_tensor(rng, 4, 2, 3, 3), true);
    check_layer(bn, random_tensor(rng, 2, 2, 3, 3), rng, false);
  }
  SUBCASE("strided sigmoid") {
    StridedSigmoid sig(8, 0);
    check_layer(sig, random_tensor(rng, 2, 16, 1, 1), rng, true);
  }
}

TEST_CASE("backward without forward is a stale tape") {
  Conv2d conv("c", 1, 1, 3);
  CHECK_THROWS_AS(conv.backward(Tensor(1, 1, 3, 3)), StaleTape);
  Detector model(fixtures::tiny_model_config(1));
  CHECK_THROWS_AS(model.backward(Tensor(1, 32, 1, 1)), StaleTape);
  Rng rng(2);
  const Tensor x = random_input(rng, 1, 16);
  const Tensor y = model.forward(x, true);
  model.backward(y);
  CHECK_THROWS_AS(model.backward(y), StaleTape);
}

TEST_CASE("end-to-end gradients match central differences on tiny models") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Detector model(fixtures::tiny_model_config(seed, seed % 2 == 0));
    CHECK(model.num_parameters() <= 10000);
    Rng rng(seed * 7);
    const Tensor x = random_input(rng, 2, 16);
    CHECK(model_gradient_error(model, x, rng, true) < 1e-7);
  }
}

TEST_CASE("default model shapes") {
  Detector model{ModelConfig{}};
  Rng rng(3);
  const Tensor y = model.forward(random_input(rng, 3, 64), false);
  CHECK(y.n == 3);
  CHECK(y.c == 576);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 72; ++j) {
      CHECK(y.sample(i)[j * 8] > 0.0);
      CHECK(y.sample(i)[j * 8] < 1.0);
    }
  }
  CHECK_THROWS_AS(model.forward(random_input(rng, 1, 32), false), ShapeError);
}

TEST_CASE("zeroed output layer gives existence 0.5") {
  Detector model(fixtures::tiny_model_config(4));
  for (Parameter* p : model.parameters()) {
    if (p->name.rfind("head.out", 0) == 0) std::fill(p->value.begin(), p->value.end(), 0.0);
  }
  Rng rng(4);
  const Tensor y = model.forward(random_input(rng, 2, 16), false);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 8; ++j) CHECK(y.sample(i)[j * 8] == 0.5);
  }
}

TEST_CASE("identical inputs give identical rows at inference") {
  ModelConfig cfg = fixtures::tiny_model_config(5);
  cfg.dropout_rate = 0.1;
  Detector model(cfg);
  Rng rng(5);
  const Tensor one = random_input(rng, 1, 16);
  Tensor two(2, 1, 16, 16);
  std::copy(one.data.begin(), one.data.end(), two.data.begin());
  std::copy(one.data.begin(), one.data.end(), two.data.begin() + 256);
  const Tensor y = model.forward(two, false);
  for (int k = 0; k < y.c; ++k) CHECK(y.sample(0)[k] == y.sample(1)[k]);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Detector model(fixtures::tiny_model_config(6));
  Rng rng(6);
  const Tensor y = model.forward(random_input(rng, 2, 16), true);
  model.zero_grad();
  model.backward(Tensor(y.n, y.c, y.h, y.w, 0.0));
  for (double g : model.flat_gradients()) CHECK(g == 0.0);
}

TEST_CASE("a duplicated sample doubles its gradient contribution") {
  Detector model(fixtures::tiny_model_config(7));
  Rng rng(7);
  const Tensor x = random_input(rng, 1, 16);
  const Tensor y = model.forward(x, true);
  const Tensor r = random_tensor(rng, 1, y.c, 1, 1);
  model.zero_grad();
  model.backward(r);
  const auto g1 = model.flat_gradients();

  Tensor xx(2, 1, 16, 16);
  std::copy(x.data.begin(), x.data.end(), xx.data.begin());
  std::copy(x.data.begin(), x.data.end(), xx.data.begin() + 256);
  Tensor rr(2, y.c, 1, 1);
  std::copy(r.data.begin(), r.data.end(), rr.data.begin());
  std::copy(r.data.begin(), r.data.end(), rr.data.begin() + y.c);
  model.forward(xx, true);
  model.zero_grad();
  model.backward(rr);
  const auto g2 = model.flat_gradients();
  std::vector<double> doubled(g1.size());
  for (std::size_t i = 0; i < g1.size(); ++i) doubled[i] = 2.0 * g1[i];
  CHECK(oracle::relative_error(g2, doubled) < 1e-12);
}

TEST_CASE("model config text round trip and validation") {
  ModelConfig c = fixtures::tiny_model_config(99, true);
  c.dropout_rate = 0.25;
  const ModelConfig back = ModelConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.stage_channels == c.stage_channels);
  CHECK(back.batch_norm);
  ModelConfig bad;
  bad.input_size = 8;
  bad.stage_channels = {4, 4, 4, 4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("one-cycle schedule") {
  const OneCycleSchedule s(1e-3, 1000);
  CHECK(s.at(0) == doctest::Approx(1e-3 / 25).epsilon(1e-12));
  CHECK(s.at(s.peak_step()) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(s.peak_step() == 300);
  CHECK(s.at(999) == doctest::Approx(1e-3 / 1e4).epsilon(1e-9));
  double prev = s.at(0);
  for (long k = 1; k <= s.peak_step(); ++k) {
    CHECK(s.at(k) >= prev);
    CHECK(s.at(k) - prev < 2e-5);
    prev = s.at(k);
  }
  for (long k = s.peak_step() + 1; k < 1000; ++k) {
    CHECK(s.at(k) <= prev);
    CHECK(prev - s.at(k) < 2e-5);
    prev = s.at(k);
  }
}

TEST_CASE("adamw decays weights but not biases") {
  Parameter w("w", 1, true), b("b", 1, false);
  w.value[0] = b.value[0] = 1.0;
  AdamW opt(0.9, 0.999, 1e-8, 0.1);
  opt.step({&w, &b}, 0.5);
  CHECK(w.value[0] == doctest::Approx(0.95));
  CHECK(b.value[0] == 1.0);
  CHECK(opt.steps() == 1);
}

TEST_CASE("one epoch at lr 0 leaves parameters unchanged") {
  const ModelConfig mc = [] {
    ModelConfig c;
    c.stage_channels = {4, 4, 4};
    c.head_width = 32;
    c.seed = 3;
    return c;
  }();
  Detector model(mc);
  const auto before = model.flat_parameters();
  const auto samples = make_samples(desk_scenes(1, 8), mc);
  TrainConfig tc;
  tc.epochs = 1;
  tc.max_lr = 0.0;
  const TrainResult res = train(model, samples, {}, tc, AugmentConfig::desk());
  CHECK(res.history.size() == 1);
  CHECK(model.flat_parameters() == before);
}

TEST_CASE("non-finite loss raises TrainingDiverged with the last good checkpoint") {
  ModelConfig mc;
  mc.stage_channels = {4, 4, 4};
  mc.head_width = 16;
  Detector model(mc);
  auto samples = make_samples(desk_scenes(2, 9), mc);
  samples[1].image.pixels[5] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 1;
  tc.stage2 = false;
  try {
    train(model, samples, {}, tc, AugmentConfig::none());
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.last_good().epoch == 0);
    CHECK(e.last_good().parameters.size() == model.num_parameters());
  }
}

TEST_CASE("checkpoint round trip and resume") {
  ModelConfig mc;
  mc.stage_channels = {4, 8, 8};
  mc.head_width = 32;
  mc.batch_norm = true;
  mc.seed = 12;
  const auto samples = make_samples(desk_scenes(4, 10), mc);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.seed = 4;
  const AugmentConfig aug = AugmentConfig::desk();

  Detector straight(mc);
  const TrainResult full = train(straight, samples, samples, tc, aug);

  // Interrupt a second run after epoch 2.
  struct Interrupt {};
  Checkpoint at_two;
  Detector first(mc);
  try {
    train(first, samples, samples, tc, aug, nullptr, [&](const EpochRecord& rec, const Checkpoint& last) {
      if (rec.epoch == 2) {
        at_two = last;
        throw Interrupt{};
      }
    });
  } catch (const Interrupt&) {
  }
  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(at_two, dir / "last.ckpt");
  const Checkpoint loaded = load_checkpoint(dir / "last.ckpt");
  CHECK(loaded.parameters == at_two.parameters);
  CHECK(loaded.buffers == at_two.buffers);
  CHECK(loaded.adam_state == at_two.adam_state);
  CHECK(loaded.model.to_text() == mc.to_text());
  CHECK(loaded.epoch == 2);

  Detector resumed = restore_model(loaded);
  const TrainResult rest = train(resumed, samples, samples, tc, aug, &loaded);
  REQUIRE(rest.history.size() == 2);
  CHECK(rest.history[1].epoch == 4);
  CHECK(history_csv_row(rest.history[1]) == history_csv_row(full.history[3]));
  CHECK(resumed.flat_parameters() == straight.flat_parameters());

  testing::spit(dir / "bad.ckpt", "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), IoError);
}

TEST_CASE("training is bitwise reproducible") {
  ModelConfig mc;
  mc.stage_channels = {4, 8, 8};
  mc.head_width = 32;
  mc.seed = 2;
  const auto samples = make_samples(desk_scenes(3, 11), mc);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  std::string runs[2];
  for (auto& text : runs) {
    Detector model(mc);
    const TrainResult r = train(model, samples, samples, tc, AugmentConfig::desk());
    for (const auto& rec : r.history) text += history_csv_row(rec);
  }
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("infer is decode of forward") {
  ModelConfig mc;
  mc.stage_channels = {4, 4, 4};
  mc.head_width = 16;
  Detector model(mc);
  const auto scenes = desk_scenes(2, 13);
  std::vector<Image> images{scenes[0].image, scenes[1].image};
  const auto dets = infer(model, images, 0.3);
  const auto raw = predict(model, images);
  const GridSpec spec = mc.grid(64, 64);
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(dets[i] == decode(std::span<const double>(raw[i]), spec, 0.3));
  }
  CHECK(infer(model, images, 1.0 + 1e-9)[0].empty());
}
