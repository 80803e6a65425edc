#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spnet/annotations.hpp"

namespace spnet {

/// Variable order inside one predictor: existence, centre offsets, axes,
/// doubled-angle code, ring count.
enum Var : int { kP = 0, kX, kY, kA, kB, kC, kS, kR, kNumVars };

struct GridSpec {
  int rows = 6;
  int cols = 6;
  int predictors_per_cell = 2;
  int vars_per_predictor = kNumVars;
  int image_width = 512;
  int image_height = 384;
  double rings_max = kDefaultRingsMax;

  int num_predictors() const { return rows * cols * predictors_per_cell; }
  std::size_t size() const {
    return static_cast<std::size_t>(num_predictors()) * vars_per_predictor;
  }
  double cell_width() const { return static_cast<double>(image_width) / cols; }
  double cell_height() const { return static_cast<double>(image_height) / rows; }
  std::size_t offset(int row, int col, int slot) const {
    return (static_cast<std::size_t>(row * cols + col) * predictors_per_cell + slot) *
           vars_per_predictor;
  }
  /// Cell containing a point; half-open cells, so boundaries go to the higher index.
  std::pair<int, int> cell_of(double x, double y) const;
};

/// Flat target/prediction vector ordered (row, col, predictor, var).
struct GridTensor {
  std::vector<double> values;

  GridTensor() = default;
  explicit GridTensor(std::size_t n) : values(n, 0.0) {}

  std::size_t size() const { return values.size(); }
  std::span<double> predictor(const GridSpec& spec, int row, int col, int slot) {
    return {values.data() + spec.offset(row, col, slot), static_cast<std::size_t>(kNumVars)};
  }
  std::span<const double> predictor(const GridSpec& spec, int row, int col, int slot) const {
    return {values.data() + spec.offset(row, col, slot), static_cast<std::size_t>(kNumVars)};
  }
};

/// Values held by predictors with no object: mid-range of every variable.
inline constexpr double kEmptyPredictor[kNumVars] = {0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5};

/// Builds the training target. Throws CellOverflow when a cell receives more
/// antinodes than it has predictor slots, InvalidEllipse for centres outside
/// the image and ConfigError for ring counts above rings_max.
GridTensor encode(std::span<const Annotation> annotations, const GridSpec& spec);

enum class DecodeMode {
  normalized,  // a ≥ b, θ ∈ [0, 180)
  raw,         // axes as predicted (b may exceed a)
};

/// One detection per predictor whose existence value is ≥ threshold. Decoded
/// axes are at least 1e-3 px and ring counts at least 0.
/// Throws ShapeError when the tensor length does not match the spec.
std::vector<Detection> decode(std::span<const double> tensor, const GridSpec& spec,
                              double threshold = 0.5, DecodeMode mode = DecodeMode::normalized);

inline std::vector<Detection> decode(const GridTensor& tensor, const GridSpec& spec,
                                     double threshold = 0.5,
                                     DecodeMode mode = DecodeMode::normalized) {
  return decode(std::span<const double>(tensor.values), spec, threshold, mode);
}

}  // namespace spnet
