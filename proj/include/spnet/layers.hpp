#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "spnet/rng.hpp"

namespace spnet {

/// Dense NCHW batch of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  double* sample(int i) { return data.data() + i * sample_size(); }
  const double* sample(int i) const { return data.data() + i * sample_size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// A trainable array with its accumulated gradient.
struct Parameter {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;
  bool decay = true;  // weight decay applies (weights yes, biases no)

  Parameter(std::string n, std::size_t size, bool d)
      : name(std::move(n)), value(size, 0.0), grad(size, 0.0), decay(d) {}
};

/// A differentiable layer. forward() records what backward() needs; backward()
/// accumulates parameter gradients and returns the gradient w.r.t. the input.
/// backward() without a preceding forward() throws StaleTape.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Non-trainable state that must be checkpointed (running statistics).
  virtual std::vector<std::vector<double>*> buffers() { return {}; }
  virtual std::string kind() const = 0;
};

/// Square k×k convolution, stride 1, zero "same" padding.
class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel = 3);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv2d"; }
  void init(Rng& rng, double gain);
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_, out_, k_;
  Parameter weight_;  // out × (in·k·k)
  Parameter bias_;
  Tensor input_;
  std::vector<double> cols_;  // im2col per sample, concatenated
  bool recorded_ = false;
};

/// 2×2 average pooling, stride 2 (odd trailing rows/columns are dropped).
class AvgPool2 final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "avgpool2"; }

 private:
  int in_h_ = 0, in_w_ = 0;
  bool recorded_ = false;
};

/// Repeats the channels `times` times (1 channel → 3 identical channels).
class Tile final : public Layer {
 public:
  explicit Tile(int times) : times_(times) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "tile"; }

 private:
  int times_;
  int in_c_ = 0;
  bool recorded_ = false;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(double slope) : slope_(slope) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "leaky_relu"; }

 private:
  double slope_;
  Tensor input_;
  bool recorded_ = false;
};

/// Inverted dropout; the identity when not training or rate == 0.
class Dropout final : public Layer {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "dropout"; }
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

 private:
  double rate_;
  Rng rng_;
  std::vector<double> mask_;
  bool recorded_ = false;
};

/// Fully connected layer on the flattened sample; output shape n×out×1×1.
class Dense final : public Layer {
 public:
  Dense(std::string name, int in_features, int out_features);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "dense"; }
  void init(Rng& rng, double gain);
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_, out_;
  Parameter weight_;  // out × in
  Parameter bias_;
  Tensor input_;
  bool recorded_ = false;
};

/// Per-channel batch normalization over (n, h, w) with learned scale/shift.
/// Training uses batch statistics and updates running averages; inference
/// uses the running averages.
class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::vector<double>*> buffers() override { return {&running_mean_, &running_var_}; }
  std::string kind() const override { return "batchnorm2d"; }

 private:
  int channels_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  std::vector<double> running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool batch_stats_ = false;
  bool recorded_ = false;
};

/// Logistic squashing of every `stride`-th value starting at `offset` in each
/// sample (the existence channel of each grid predictor); others pass through.
class StridedSigmoid final : public Layer {
 public:
  StridedSigmoid(int stride, int offset) : stride_(stride), offset_(offset) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "strided_sigmoid"; }

 private:
  int stride_, offset_;
  Tensor output_;
  bool recorded_ = false;
};

}  // namespace spnet
