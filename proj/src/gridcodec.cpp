#include "spnet/gridcodec.hpp"

#include <algorithm>
#include <cmath>

#include "spnet/errors.hpp"

namespace spnet {

namespace {

// Smallest axis, in pixels, a decoded detection may carry.
constexpr double kMinDecodedAxis = 1e-3;

}  // namespace

std::pair<int, int> GridSpec::cell_of(double x, double y) const {
  const int col = std::clamp(static_cast<int>(std::floor(x / cell_width())), 0, cols - 1);
  const int row = std::clamp(static_cast<int>(std::floor(y / cell_height())), 0, rows - 1);
  return {row, col};
}

GridTensor encode(std::span<const Annotation> annotations, const GridSpec& spec) {
  GridTensor t(spec.size());
  for (int i = 0; i < spec.num_predictors(); ++i) {
    std::copy(std::begin(kEmptyPredictor), std::end(kEmptyPredictor),
              t.values.begin() + static_cast<std::ptrdiff_t>(i) * spec.vars_per_predictor);
  }

  std::vector<Annotation> sorted(annotations.begin(), annotations.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Annotation& l, const Annotation& r) {
    if (l.ellipse.cy != r.ellipse.cy) return l.ellipse.cy < r.ellipse.cy;
    return l.ellipse.cx < r.ellipse.cx;
  });

  const double cw = spec.cell_width();
  const double ch = spec.cell_height();
  std::vector<int> used(static_cast<std::size_t>(spec.rows * spec.cols), 0);
  for (const Annotation& ann : sorted) {
    const Ellipse e = normalize(ann.ellipse);
    if (e.cx < 0.0 || e.cy < 0.0 || e.cx > spec.image_width || e.cy > spec.image_height) {
      throw InvalidEllipse("antinode centre lies outside the image");
    }
    if (ann.rings < 0.0 || ann.rings > spec.rings_max) {
      throw ConfigError("ring count outside [0, rings_max]");
    }
    const auto [row, col] = spec.cell_of(e.cx, e.cy);
    int& slot = used[static_cast<std::size_t>(row * spec.cols + col)];
    if (slot >= spec.predictors_per_cell) throw CellOverflow(row, col);
    auto v = t.predictor(spec, row, col, slot++);
    const AngleCode code = angle_encode(e.theta);
    v[kP] = 1.0;
    v[kX] = (e.cx - (col + 0.5) * cw) / cw;
    v[kY] = (e.cy - (row + 0.5) * ch) / ch;
    v[kA] = e.a / spec.image_width;
    v[kB] = e.b / spec.image_width;
    v[kC] = code.c;
    v[kS] = code.s;
    v[kR] = ann.rings / spec.rings_max;
  }
  return t;
}

std::vector<Detection> decode(std::span<const double> tensor, const GridSpec& spec,
                              double threshold, DecodeMode mode) {
  if (tensor.size() != spec.size()) {
    throw ShapeError("grid tensor has " + std::to_string(tensor.size()) + " values, expected " +
                     std::to_string(spec.size()));
  }
  const double cw = spec.cell_width();
  const double ch = spec.cell_height();
  std::vector<Detection> out;
  for (int row = 0; row < spec.rows; ++row) {
    for (int col = 0; col < spec.cols; ++col) {
      for (int slot = 0; slot < spec.predictors_per_cell; ++slot) {
        const double* v = tensor.data() + spec.offset(row, col, slot);
        if (!(v[kP] >= threshold)) continue;
        Detection d;
        d.confidence = v[kP];
        d.ellipse.cx = (col + 0.5 + v[kX]) * cw;
        d.ellipse.cy = (row + 0.5 + v[kY]) * ch;
        d.ellipse.a = std::max(v[kA] * spec.image_width, kMinDecodedAxis);
        d.ellipse.b = std::max(v[kB] * spec.image_width, kMinDecodedAxis);
        d.ellipse.theta = (v[kC] == 0.0 && v[kS] == 0.0) ? 0.0 : angle_decode(v[kC], v[kS]);
        d.rings = std::max(v[kR] * spec.rings_max, 0.0);
        if (mode == DecodeMode::normalized) d.ellipse = normalize(d.ellipse);
        out.push_back(d);
      }
    }
  }
  return out;
}

}  // namespace spnet
