#pragma once

// Random inputs shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "spnet/annotations.hpp"
#include "spnet/gridcodec.hpp"
#include "spnet/loss.hpp"
#include "spnet/model.hpp"
#include "spnet/rng.hpp"

namespace spnet::fixtures {

/// Annotation set with at most `per_cell` centres in any grid cell.
inline std::vector<Annotation> random_annotation_set(Rng& rng, const GridSpec& spec, int per_cell) {
  std::vector<Annotation> out;
  const int n = rng.uniform_int(0, 12);
  std::vector<int> used(static_cast<std::size_t>(spec.rows * spec.cols), 0);
  for (int k = 0; k < n; ++k) {
    Annotation a;
    a.ellipse.cx = rng.uniform(0.0, spec.image_width - 1e-9);
    a.ellipse.cy = rng.uniform(0.0, spec.image_height - 1e-9);
    const auto [row, col] = spec.cell_of(a.ellipse.cx, a.ellipse.cy);
    int& u = used[static_cast<std::size_t>(row * spec.cols + col)];
    if (u >= per_cell) continue;
    ++u;
    a.ellipse.a = rng.uniform(2.0, 200.0);
    a.ellipse.b = rng.uniform(1.0, a.ellipse.a);
    a.ellipse.theta = rng.uniform(0.0, 180.0);
    a.rings = rng.uniform(0.0, spec.rings_max);
    out.push_back(a);
  }
  return out;
}

/// Largest deviation between a truth and a detection in normalized grid units
/// (centre in cells, axes and rings in their encoded scales, angle in degrees mod 180).
inline double normalized_deviation(const Annotation& t, const Detection& d, const GridSpec& spec) {
  const double dth = std::remainder(t.ellipse.theta - d.ellipse.theta, 180.0);
  return std::max({std::abs(t.ellipse.cx - d.ellipse.cx) / spec.cell_width(),
                   std::abs(t.ellipse.cy - d.ellipse.cy) / spec.cell_height(),
                   std::abs(t.ellipse.a - d.ellipse.a) / spec.image_width,
                   std::abs(t.ellipse.b - d.ellipse.b) / spec.image_width, std::abs(dth),
                   std::abs(t.rings - d.rings) / spec.rings_max});
}

struct LossInstance {
  std::vector<double> truth, pred;
  LossWeights w;
};

/// Random targets (30% occupied), predictions and weights on the default grid.
inline LossInstance random_loss_instance(Rng& rng, ExistenceMode mode) {
  const GridSpec spec;
  LossInstance in;
  in.truth.resize(spec.size());
  in.pred.resize(spec.size());
  for (int j = 0; j < spec.num_predictors(); ++j) {
    double* t = &in.truth[static_cast<std::size_t>(j) * kNumVars];
    double* p = &in.pred[static_cast<std::size_t>(j) * kNumVars];
    t[kP] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    t[kX] = rng.uniform(-0.5, 0.5);
    t[kY] = rng.uniform(-0.5, 0.5);
    t[kA] = rng.uniform(0.0, 1.0);
    t[kB] = rng.uniform(0.0, t[kA]);
    const double th = rng.uniform(0.0, std::numbers::pi);
    t[kC] = std::cos(th);
    t[kS] = std::sin(th);
    t[kR] = rng.uniform(0.0, 1.0);
    for (int v = 0; v < kNumVars; ++v) p[v] = rng.uniform(-1.0, 1.5);
    p[kP] = rng.uniform(0.05, 0.95);
  }
  in.w.lambda_p = rng.uniform(0.1, 5.0);
  in.w.lambda_center = rng.uniform(0.1, 5.0);
  in.w.lambda_size = rng.uniform(0.1, 5.0);
  in.w.lambda_angle = rng.uniform(0.1, 5.0);
  in.w.lambda_r = rng.uniform(0.1, 5.0);
  in.w.existence_mode = mode;
  return in;
}

struct DetectionScenes {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Annotation>> truths;
};

/// A few frames with jittered, duplicated, missing and spurious detections
/// and coarse confidences (so ties occur). At least one truth overall.
inline DetectionScenes constructed_scenes(Rng& rng) {
  DetectionScenes f;
  const int frames = rng.uniform_int(1, 4);
  for (int i = 0; i < frames; ++i) {
    std::vector<Annotation> truths;
    std::vector<Detection> dets;
    const int n = rng.uniform_int(0, 5);
    for (int k = 0; k < n; ++k) {
      Ellipse el{rng.uniform(20, 480), rng.uniform(20, 360), rng.uniform(8, 30), 0.0,
                 rng.uniform(0, 180)};
      el.b = el.a * rng.uniform(0.4, 1.0);
      truths.push_back({el, static_cast<double>(rng.uniform_int(1, 11)), true});
      if (rng.bernoulli(0.8)) {
        Ellipse d = el;
        const double jitter = rng.uniform(0.0, 0.35) * el.b;
        d.cx += rng.uniform(-jitter, jitter);
        d.cy += rng.uniform(-jitter, jitter);
        d.a *= rng.uniform(0.85, 1.15);
        d.b *= rng.uniform(0.85, 1.15);
        d.theta += rng.uniform(-10, 10);
        dets.push_back({normalize(d), 3.0, std::round(rng.uniform(0, 1) * 5) / 5});
      }
      if (rng.bernoulli(0.2)) {
        Ellipse d = el;
        d.cx += rng.uniform(-3, 3);
        dets.push_back({d, 3.0, std::round(rng.uniform(0, 1) * 5) / 5});
      }
    }
    const int spurious = rng.uniform_int(0, 2);
    for (int k = 0; k < spurious; ++k) {
      dets.push_back({{rng.uniform(0, 512), rng.uniform(0, 384), 10, 6, 0}, 1.0, rng.uniform(0, 1)});
    }
    f.truths.push_back(truths);
    f.dets.push_back(dets);
  }
  if (std::all_of(f.truths.begin(), f.truths.end(), [](const auto& t) { return t.empty(); })) {
    f.truths[0].push_back({{100, 100, 20, 10, 30}, 2.0, true});
  }
  return f;
}

/// Model small enough (< 1e4 parameters) for full finite-difference checks.
inline ModelConfig tiny_model_config(std::uint64_t seed, bool batch_norm = false) {
  ModelConfig c;
  c.input_size = 16;
  c.preblock_channels = 3;
  c.stage_channels = {4, 4};
  c.head_width = 16;
  c.grid_rows = 2;
  c.grid_cols = 2;
  c.predictors_per_cell = 2;
  c.dropout_rate = 0.0;
  c.batch_norm = batch_norm;
  c.seed = seed;
  return c;
}

}  // namespace spnet::fixtures
