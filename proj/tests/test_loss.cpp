#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "spnet/errors.hpp"
#include "spnet/gridcodec.hpp"
#include "spnet/loss.hpp"

using namespace spnet;

namespace {

// Direct transcription of the per-predictor loss, used as a value oracle.
double reference_loss(const double* t, const double* p, const LossWeights& w) {
  double existence;
  if (w.existence_mode == ExistenceMode::squared_error) {
    existence = (t[kP] - p[kP]) * (t[kP] - p[kP]);
  } else {
    const double q = std::clamp(p[kP], 1e-7, 1.0 - 1e-7);
    existence = -(t[kP] * std::log(q) + (1.0 - t[kP]) * std::log(1.0 - q));
  }
  auto sq = [&](int v) { return (t[v] - p[v]) * (t[v] - p[v]); };
  const double ab = t[kA] - t[kB];
  return w.lambda_p * existence +
         t[kP] * (w.lambda_center * (sq(kX) + sq(kY)) + w.lambda_size * (sq(kA) + sq(kB)) +
                  w.lambda_angle * ab * ab * (sq(kC) + sq(kS)) + w.lambda_r * sq(kR));
}

}  // namespace

TEST_CASE("per-predictor examples") {
  const LossWeights w;
  const std::vector<double> truth{1, 0.1, -0.2, 0.3, 0.2, 0.6, 0.8, 0.4};
  CHECK(loss_per_predictor(truth, truth, w) == 0.0);

  std::vector<double> pred = truth;
  pred[kR] += 1.0;
  CHECK(loss_per_predictor(truth, pred, w) == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> masked{0, 0, 0, 0.5, 0.5, 0, 0, 0.5};
  const std::vector<double> junk{0, 3, -4, 9, 2, -1, 7, 100};
  CHECK(loss_per_predictor(masked, junk, w) == 0.0);

  const std::vector<double> circle{1, 0, 0, 0.3, 0.3, 1, 0, 0.2};
  std::vector<double> rotated = circle;
  rotated[kC] = -0.4;
  rotated[kS] = 0.9;
  CHECK(loss_per_predictor(circle, rotated, w) == 0.0);
}

TEST_CASE("value matches the reference formula") {
  Rng rng(11);
  for (auto mode : {ExistenceMode::squared_error, ExistenceMode::cross_entropy}) {
    for (int trial = 0; trial < 50; ++trial) {
      const fixtures::LossInstance in = fixtures::random_loss_instance(rng, mode);
      double ref = 0.0;
      for (int j = 0; j < 72; ++j) {
        ref += reference_loss(&in.truth[j * 8], &in.pred[j * 8], in.w);
      }
      ref /= 72.0;
      CHECK(std::abs(total_loss(in.truth, in.pred, in.w) - ref) <= 1e-12 * std::max(1.0, ref));
    }
  }
}

TEST_CASE("total loss is a mean over predictors") {
  const GridSpec spec;
  const LossWeights w;
  GridTensor truth = encode(std::vector<Annotation>{{{100, 100, 30, 20, 10}, 3, true}}, spec);
  CHECK(total_loss(truth.values, truth.values, w) == 0.0);
  CHECK(loss_gradient(truth.values, truth.values, w) == std::vector<double>(576, 0.0));

  GridTensor pred = truth;
  const auto [row, col] = spec.cell_of(100, 100);
  pred.predictor(spec, row, col, 0)[kR] += 1.0;
  CHECK(total_loss(truth.values, pred.values, w) == doctest::Approx(1.0 / 72).epsilon(1e-12));

  LossWeights doubled;
  doubled.lambda_p = doubled.lambda_center = doubled.lambda_size = doubled.lambda_angle =
      doubled.lambda_r = 2.0;
  Rng rng(3);
  for (double& v : pred.values) v += rng.uniform(-0.3, 0.3);
  CHECK(total_loss(truth.values, pred.values, doubled) ==
        doctest::Approx(2.0 * total_loss(truth.values, pred.values, w)).epsilon(1e-12));
}

TEST_CASE("shape errors") {
  const LossWeights w;
  std::vector<double> a(576), b(568), c(575);
  CHECK_THROWS_AS(total_loss(a, b, w), ShapeError);
  CHECK_THROWS_AS(total_loss(c, c, w), ShapeError);
  CHECK_THROWS_AS(loss_gradient(a, b, w), ShapeError);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(17);
  for (auto mode : {ExistenceMode::squared_error, ExistenceMode::cross_entropy}) {
    for (int trial = 0; trial < 100; ++trial) {
      const fixtures::LossInstance in = fixtures::random_loss_instance(rng, mode);
      const auto g = loss_gradient(in.truth, in.pred, in.w);
      const auto fd = oracle::central_differences(
          in.pred, [&](const std::vector<double>& x) { return total_loss(in.truth, x, in.w); },
          1e-5);
      CHECK(oracle::relative_error(g, fd) < 1e-6);
      CHECK(oracle::relative_error(g, loss_gradient_fd(in.truth, in.pred, in.w)) < 1e-6);
    }
  }
}

TEST_CASE("masked predictors have no gradient outside p") {
  Rng rng(21);
  const fixtures::LossInstance in = fixtures::random_loss_instance(rng, ExistenceMode::squared_error);
  const auto g = loss_gradient(in.truth, in.pred, in.w);
  for (int j = 0; j < 72; ++j) {
    if (in.truth[j * 8 + kP] != 0.0) continue;
    for (int v = kX; v < kNumVars; ++v) CHECK(g[j * 8 + v] == 0.0);
  }
}

TEST_CASE("circular truth makes the loss independent of predicted angle") {
  Rng rng(4);
  const LossWeights w;
  for (int trial = 0; trial < 50; ++trial) {
    fixtures::LossInstance in = fixtures::random_loss_instance(rng, ExistenceMode::squared_error);
    for (int j = 0; j < 72; ++j) in.truth[j * 8 + kB] = in.truth[j * 8 + kA];
    const double base = total_loss(in.truth, in.pred, w);
    for (int j = 0; j < 72; ++j) {
      in.pred[j * 8 + kC] = rng.uniform(-3, 3);
      in.pred[j * 8 + kS] = rng.uniform(-3, 3);
    }
    CHECK(total_loss(in.truth, in.pred, w) == base);
  }
}

TEST_CASE("squared-error loss is non-negative and cross-entropy clamps") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const fixtures::LossInstance in = fixtures::random_loss_instance(rng, ExistenceMode::squared_error);
    CHECK(total_loss(in.truth, in.pred, in.w) >= 0.0);
  }
  LossWeights ce;
  ce.existence_mode = ExistenceMode::cross_entropy;
  const std::vector<double> t{1, 0, 0, 0.5, 0.5, 0, 0, 0.5};
  std::vector<double> p = t;
  p[kP] = 0.0;
  CHECK(std::isfinite(loss_per_predictor(t, p, ce)));
  CHECK(loss_per_predictor(t, p, ce) == doctest::Approx(-std::log(1e-7)));
}

TEST_CASE("pairwise sum") {
  std::vector<double> v(1000);
  for (int i = 0; i < 1000; ++i) v[i] = i + 1;
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum({}) == 0.0);
}
