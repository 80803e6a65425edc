#pragma once

#include <span>
#include <vector>

#include "spnet/gridcodec.hpp"

namespace spnet {

enum class ExistenceMode { squared_error, cross_entropy };

/// Term weights of the per-predictor loss. All default to 1.
struct LossWeights {
  double lambda_p = 1.0;
  double lambda_center = 1.0;
  double lambda_size = 1.0;
  double lambda_angle = 1.0;
  double lambda_r = 1.0;
  ExistenceMode existence_mode = ExistenceMode::squared_error;
};

/// Clamp applied to p̂ before taking logs in cross-entropy mode.
inline constexpr double kCrossEntropyEps = 1e-7;

/// Per-term contributions, already weighted and masked.
struct LossTerms {
  double existence = 0.0;
  double center = 0.0;
  double size = 0.0;
  double angle = 0.0;
  double rings = 0.0;

  double total() const { return existence + center + size + angle + rings; }
  LossTerms& operator+=(const LossTerms& o);
  LossTerms scaled(double k) const;
};

/// Loss of one predictor:
///   λp·Δp² + p·[λcenter(Δx²+Δy²) + λsize(Δa²+Δb²) + λangle(a−b)²(Δc²+Δs²) + λr·Δr²]
/// where p, a, b are ground truth. In cross-entropy mode the first term is the
/// binary cross-entropy of p̂ against p instead.
LossTerms loss_terms(std::span<const double> truth, std::span<const double> pred,
                     const LossWeights& w);

double loss_per_predictor(std::span<const double> truth, std::span<const double> pred,
                          const LossWeights& w);

/// Mean of the per-predictor losses over every predictor in the tensor.
/// Throws ShapeError on mismatched or non-multiple-of-8 lengths.
double total_loss(std::span<const double> truth, std::span<const double> pred,
                  const LossWeights& w);
LossTerms total_loss_terms(std::span<const double> truth, std::span<const double> pred,
                           const LossWeights& w);

/// ∂total_loss/∂pred.
std::vector<double> loss_gradient(std::span<const double> truth, std::span<const double> pred,
                                  const LossWeights& w);

/// Central finite-difference estimate of ∂total_loss/∂pred (test oracle).
std::vector<double> loss_gradient_fd(std::span<const double> truth, std::span<const double> pred,
                                     const LossWeights& w, double step = 1e-5);

/// Sum with a fixed pairwise reduction tree, independent of thread count.
double pairwise_sum(std::span<const double> values);

}  // namespace spnet
