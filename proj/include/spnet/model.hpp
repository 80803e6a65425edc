#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spnet/gridcodec.hpp"
#include "spnet/image.hpp"
#include "spnet/layers.hpp"

namespace spnet {

/// Desk-scale detector configuration. Full-scale inputs are 331×331; the
/// default here is 64×64 so a CPU can train it in minutes.
struct ModelConfig {
  int input_size = 64;
  int preblock_channels = 3;
  std::vector<int> stage_channels{16, 32, 64};
  int kernel = 3;
  int head_width = 512;  // 0: head connects the flattened features straight to the grid
  double dropout_rate = 0.1;
  double weight_decay = 1e-4;
  double leaky_slope = 0.1;
  bool batch_norm = false;
  int grid_rows = 6;
  int grid_cols = 6;
  int predictors_per_cell = 2;
  double rings_max = kDefaultRingsMax;  // ring count that maps to r = 1
  std::uint64_t seed = 0;

  int output_size() const { return grid_rows * grid_cols * predictors_per_cell * kNumVars; }
  /// Grid layout of the output for frames of the given size.
  GridSpec grid(int image_width, int image_height) const;

  /// Flat `key=value` lines; from_text() accepts the same format.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  /// Throws ConfigError for sizes that do not survive the pooling stages.
  void validate() const;
};

/// Converts frames to the network input: area resize to input_size², gray
/// levels scaled to [0, 1]. Output shape n×1×S×S.
Tensor prepare_input(std::span<const Image> images, int input_size);

/// Residual pre-block + conv/pool stages + fully connected grid head.
///
///   x ─ standardize ─┬─ avgpool ─ tile(3) ───────────────────────────┐
///                    └─ conv ─ lrelu ─ avgpool ─ conv ─ lrelu ─ conv ─(+)─ dropout ─ …
///   … ─ [conv ─ (bn) ─ lrelu ─ avgpool] × stages ─ dense ─ lrelu ─ dense ─ σ(p)
///
/// Each image is standardized to zero mean and unit variance before the
/// pre-block. The existence channel of every predictor is squashed by a
/// logistic; all other outputs are linear.
class Detector {
 public:
  explicit Detector(const ModelConfig& cfg);
  Detector(const Detector& other);
  Detector& operator=(const Detector& other);
  Detector(Detector&&) noexcept;
  Detector& operator=(Detector&&) noexcept;
  ~Detector();

  const ModelConfig& config() const { return cfg_; }

  /// Input n×1×S×S in [0, 1]; output n×output_size×1×1. Dropout and batch
  /// statistics are active only when `training`. Throws ShapeError.
  Tensor forward(const Tensor& input, bool training);

  /// Accumulates ∂/∂θ of Σ grad_output·output into every parameter gradient.
  /// Throws StaleTape unless a forward pass has been recorded since the last backward.
  void backward(const Tensor& grad_output);

  void zero_grad();
  std::vector<Parameter*> parameters();
  std::vector<std::vector<double>*> buffers();
  std::size_t num_parameters();

  std::vector<double> flat_parameters();
  void set_flat_parameters(std::span<const double> values);
  std::vector<double> flat_gradients();
  std::vector<double> flat_buffers();
  void set_flat_buffers(std::span<const double> values);

  /// Restarts the dropout stream (used to make each epoch reproducible).
  void reseed_dropout(std::uint64_t seed);

 private:
  struct Layers;
  void build();

  ModelConfig cfg_;
  std::unique_ptr<Layers> layers_;
};

}  // namespace spnet
