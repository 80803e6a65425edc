#include "spnet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "spnet/errors.hpp"

namespace spnet {

namespace {

void check_shapes(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size() || truth.size() % kNumVars != 0) {
    throw ShapeError("loss expects equal-length tensors with a multiple of 8 values (got " +
                     std::to_string(truth.size()) + " and " + std::to_string(pred.size()) + ")");
  }
}

double sq(double v) { return v * v; }

}  // namespace

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  existence += o.existence;
  center += o.center;
  size += o.size;
  angle += o.angle;
  rings += o.rings;
  return *this;
}

LossTerms LossTerms::scaled(double k) const {
  return {existence * k, center * k, size * k, angle * k, rings * k};
}

LossTerms loss_terms(std::span<const double> t, std::span<const double> q, const LossWeights& w) {
  LossTerms out;
  const double p = t[kP];
  if (w.existence_mode == ExistenceMode::squared_error) {
    out.existence = w.lambda_p * sq(q[kP] - p);
  } else {
    const double ph = std::clamp(q[kP], kCrossEntropyEps, 1.0 - kCrossEntropyEps);
    out.existence = -w.lambda_p * (p * std::log(ph) + (1.0 - p) * std::log(1.0 - ph));
  }
  if (p != 0.0) {
    out.center = p * w.lambda_center * (sq(q[kX] - t[kX]) + sq(q[kY] - t[kY]));
    out.size = p * w.lambda_size * (sq(q[kA] - t[kA]) + sq(q[kB] - t[kB]));
    out.angle = p * w.lambda_angle * sq(t[kA] - t[kB]) * (sq(q[kC] - t[kC]) + sq(q[kS] - t[kS]));
    out.rings = p * w.lambda_r * sq(q[kR] - t[kR]);
  }
  return out;
}

double loss_per_predictor(std::span<const double> truth, std::span<const double> pred,
                          const LossWeights& w) {
  return loss_terms(truth, pred, w).total();
}

LossTerms total_loss_terms(std::span<const double> truth, std::span<const double> pred,
                           const LossWeights& w) {
  check_shapes(truth, pred);
  const std::size_t n = truth.size() / kNumVars;
  LossTerms sum;
  for (std::size_t j = 0; j < n; ++j) {
    sum += loss_terms(truth.subspan(j * kNumVars, kNumVars), pred.subspan(j * kNumVars, kNumVars),
                      w);
  }
  return sum.scaled(n ? 1.0 / static_cast<double>(n) : 0.0);
}

double total_loss(std::span<const double> truth, std::span<const double> pred,
                  const LossWeights& w) {
  return total_loss_terms(truth, pred, w).total();
}

std::vector<double> loss_gradient(std::span<const double> truth, std::span<const double> pred,
                                  const LossWeights& w) {
  check_shapes(truth, pred);
  const std::size_t n = truth.size() / kNumVars;
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  std::vector<double> g(truth.size(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double* t = truth.data() + j * kNumVars;
    const double* q = pred.data() + j * kNumVars;
    double* d = g.data() + j * kNumVars;
    const double p = t[kP];
    if (w.existence_mode == ExistenceMode::squared_error) {
      d[kP] = 2.0 * w.lambda_p * (q[kP] - p);
    } else if (q[kP] > kCrossEntropyEps && q[kP] < 1.0 - kCrossEntropyEps) {
      d[kP] = -w.lambda_p * (p / q[kP] - (1.0 - p) / (1.0 - q[kP]));
    }
    if (p != 0.0) {
      const double angle_w = w.lambda_angle * sq(t[kA] - t[kB]);
      d[kX] = 2.0 * p * w.lambda_center * (q[kX] - t[kX]);
      d[kY] = 2.0 * p * w.lambda_center * (q[kY] - t[kY]);
      d[kA] = 2.0 * p * w.lambda_size * (q[kA] - t[kA]);
      d[kB] = 2.0 * p * w.lambda_size * (q[kB] - t[kB]);
      d[kC] = 2.0 * p * angle_w * (q[kC] - t[kC]);
      d[kS] = 2.0 * p * angle_w * (q[kS] - t[kS]);
      d[kR] = 2.0 * p * w.lambda_r * (q[kR] - t[kR]);
    }
    for (int v = 0; v < kNumVars; ++v) d[v] *= inv_n;
  }
  return g;
}

std::vector<double> loss_gradient_fd(std::span<const double> truth, std::span<const double> pred,
                                     const LossWeights& w, double step) {
  check_shapes(truth, pred);
  std::vector<double> probe(pred.begin(), pred.end());
  std::vector<double> g(pred.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = total_loss(truth, probe, w);
    probe[i] = orig - step;
    const double down = total_loss(truth, probe, w);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace spnet
