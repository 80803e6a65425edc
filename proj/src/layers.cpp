#include "spnet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "spnet/errors.hpp"

namespace spnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

void require_recorded(bool recorded) {
  if (!recorded) throw StaleTape();
}

void im2col(const double* x, int c, int h, int w, int k, double* cols) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          for (int xo = 0; xo < w; ++xo) {
            const int sx = xo + kx - pad;
            row[y * w + xo] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                  ? 0.0
                                  : x[(static_cast<std::size_t>(ch) * h + sy) * w + sx];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int c, int h, int w, int k, double* x) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int xo = 0; xo < w; ++xo) {
            const int sx = xo + kx - pad;
            if (sx < 0 || sx >= w) continue;
            x[(static_cast<std::size_t>(ch) * h + sy) * w + sx] += row[y * w + xo];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      weight_(name + ".weight", static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel,
              true),
      bias_(name + ".bias", static_cast<std::size_t>(out_channels), false) {}

void Conv2d::init(Rng& rng, double gain) {
  const double stddev = gain / std::sqrt(static_cast<double>(in_ * k_ * k_));
  for (double& v : weight_.value) v = rng.normal(0.0, stddev);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Conv2d::forward(const Tensor& x, bool) {
  if (x.c != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " channels, got " +
                     std::to_string(x.c));
  }
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t rows = static_cast<std::size_t>(in_) * k_ * k_;
  input_ = x;
  cols_.assign(static_cast<std::size_t>(x.n) * rows * hw, 0.0);
  Tensor y(x.n, out_, x.h, x.w);
  ConstMatMap weight(weight_.value.data(), out_, static_cast<Eigen::Index>(rows));
  Eigen::Map<const Eigen::VectorXd> bias(bias_.value.data(), out_);
  for (int i = 0; i < x.n; ++i) {
    double* cols = cols_.data() + i * rows * hw;
    im2col(x.sample(i), in_, x.h, x.w, k_, cols);
    MatMap out(y.sample(i), out_, static_cast<Eigen::Index>(hw));
    out.noalias() = weight * ConstMatMap(cols, static_cast<Eigen::Index>(rows),
                                         static_cast<Eigen::Index>(hw));
    out.colwise() += bias;
  }
  recorded_ = true;
  return y;
}

Tensor Conv2d::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  const std::size_t hw = static_cast<std::size_t>(input_.h) * input_.w;
  const std::size_t rows = static_cast<std::size_t>(in_) * k_ * k_;
  Tensor dx(input_.n, input_.c, input_.h, input_.w);
  ConstMatMap weight(weight_.value.data(), out_, static_cast<Eigen::Index>(rows));
  MatMap dweight(weight_.grad.data(), out_, static_cast<Eigen::Index>(rows));
  VecMap dbias(bias_.grad.data(), out_);
  RowMatrix dcols(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
  for (int i = 0; i < input_.n; ++i) {
    ConstMatMap gout(g.sample(i), out_, static_cast<Eigen::Index>(hw));
    ConstMatMap cols(cols_.data() + i * rows * hw, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(hw));
    dweight.noalias() += gout * cols.transpose();
    dbias += gout.rowwise().sum();
    dcols.noalias() = weight.transpose() * gout;
    col2im(dcols.data(), in_, input_.h, input_.w, k_, dx.sample(i));
  }
  return dx;
}

// ---------------------------------------------------------------- AvgPool2

Tensor AvgPool2::forward(const Tensor& x, bool) {
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor y(x.n, x.c, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const double* src = x.sample(i) + static_cast<std::size_t>(ch) * x.h * x.w;
      double* dst = y.sample(i) + static_cast<std::size_t>(ch) * y.h * y.w;
      for (int oy = 0; oy < y.h; ++oy) {
        for (int ox = 0; ox < y.w; ++ox) {
          const double* p = src + (2 * oy) * x.w + 2 * ox;
          dst[oy * y.w + ox] = 0.25 * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
        }
      }
    }
  }
  recorded_ = true;
  return y;
}

Tensor AvgPool2::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  Tensor dx(g.n, g.c, in_h_, in_w_);
  for (int i = 0; i < g.n; ++i) {
    for (int ch = 0; ch < g.c; ++ch) {
      const double* src = g.sample(i) + static_cast<std::size_t>(ch) * g.h * g.w;
      double* dst = dx.sample(i) + static_cast<std::size_t>(ch) * in_h_ * in_w_;
      for (int oy = 0; oy < g.h; ++oy) {
        for (int ox = 0; ox < g.w; ++ox) {
          const double v = 0.25 * src[oy * g.w + ox];
          double* p = dst + (2 * oy) * in_w_ + 2 * ox;
          p[0] += v;
          p[1] += v;
          p[in_w_] += v;
          p[in_w_ + 1] += v;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Tile

Tensor Tile::forward(const Tensor& x, bool) {
  in_c_ = x.c;
  Tensor y(x.n, x.c * times_, x.h, x.w);
  const std::size_t chunk = x.sample_size();
  for (int i = 0; i < x.n; ++i) {
    for (int t = 0; t < times_; ++t) {
      std::copy(x.sample(i), x.sample(i) + chunk, y.sample(i) + t * chunk);
    }
  }
  recorded_ = true;
  return y;
}

Tensor Tile::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  Tensor dx(g.n, in_c_, g.h, g.w);
  const std::size_t chunk = dx.sample_size();
  for (int i = 0; i < g.n; ++i) {
    for (int t = 0; t < times_; ++t) {
      const double* src = g.sample(i) + t * chunk;
      double* dst = dx.sample(i);
      for (std::size_t k = 0; k < chunk; ++k) dst[k] += src[k];
    }
  }
  return dx;
}

// ---------------------------------------------------------------- LeakyReLU

Tensor LeakyReLU::forward(const Tensor& x, bool) {
  input_ = x;
  Tensor y = x;
  for (double& v : y.data) {
    if (v < 0.0) v *= slope_;
  }
  recorded_ = true;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  Tensor dx = g;
  for (std::size_t k = 0; k < dx.data.size(); ++k) {
    if (input_.data[k] < 0.0) dx.data[k] *= slope_;
  }
  return dx;
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, bool training) {
  Tensor y = x;
  mask_.clear();
  if (training && rate_ > 0.0) {
    const double keep = 1.0 - rate_;
    mask_.resize(x.data.size());
    for (std::size_t k = 0; k < y.data.size(); ++k) {
      mask_[k] = rng_.uniform() < keep ? 1.0 / keep : 0.0;
      y.data[k] *= mask_[k];
    }
  }
  recorded_ = true;
  return y;
}

Tensor Dropout::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  Tensor dx = g;
  if (!mask_.empty()) {
    for (std::size_t k = 0; k < dx.data.size(); ++k) dx.data[k] *= mask_[k];
  }
  return dx;
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::string name, int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", static_cast<std::size_t>(in_features) * out_features, true),
      bias_(name + ".bias", static_cast<std::size_t>(out_features), false) {}

void Dense::init(Rng& rng, double gain) {
  const double stddev = gain / std::sqrt(static_cast<double>(in_));
  for (double& v : weight_.value) v = rng.normal(0.0, stddev);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Dense::forward(const Tensor& x, bool) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " features, got " +
                     std::to_string(x.sample_size()));
  }
  input_ = x;
  Tensor y(x.n, out_, 1, 1);
  ConstMatMap in(x.data.data(), x.n, in_);
  ConstMatMap weight(weight_.value.data(), out_, in_);
  MatMap out(y.data.data(), x.n, out_);
  out.noalias() = in * weight.transpose();
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  recorded_ = true;
  return y;
}

Tensor Dense::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  Tensor dx(input_.n, input_.c, input_.h, input_.w);
  ConstMatMap gout(g.data.data(), g.n, out_);
  ConstMatMap in(input_.data.data(), input_.n, in_);
  ConstMatMap weight(weight_.value.data(), out_, in_);
  MatMap(weight_.grad.data(), out_, in_).noalias() += gout.transpose() * in;
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) += gout.colwise().sum();
  MatMap(dx.data.data(), input_.n, in_).noalias() = gout * weight;
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", static_cast<std::size_t>(channels), false),
      beta_(name + ".beta", static_cast<std::size_t>(channels), false),
      running_mean_(static_cast<std::size_t>(channels), 0.0),
      running_var_(static_cast<std::size_t>(channels), 1.0) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  if (x.c != channels_) throw ShapeError(gamma_.name + ": channel mismatch");
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const double count = static_cast<double>(x.n) * static_cast<double>(hw);
  batch_stats_ = training;
  xhat_ = Tensor(x.n, x.c, x.h, x.w);
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  Tensor y(x.n, x.c, x.h, x.w);
  for (int ch = 0; ch < channels_; ++ch) {
    double mean = running_mean_[ch];
    double var = running_var_[ch];
    if (training) {
      double sum = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const double* p = x.sample(i) + ch * hw;
        for (std::size_t k = 0; k < hw; ++k) sum += p[k];
      }
      mean = sum / count;
      double sq = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const double* p = x.sample(i) + ch * hw;
        for (std::size_t k = 0; k < hw; ++k) sq += (p[k] - mean) * (p[k] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
      running_mean_[ch] = (1.0 - momentum_) * running_mean_[ch] + momentum_ * mean;
      running_var_[ch] = (1.0 - momentum_) * running_var_[ch] + momentum_ * unbiased;
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[ch] = inv;
    for (int i = 0; i < x.n; ++i) {
      const double* p = x.sample(i) + ch * hw;
      double* xh = xhat_.sample(i) + ch * hw;
      double* out = y.sample(i) + ch * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        xh[k] = (p[k] - mean) * inv;
        out[k] = gamma_.value[ch] * xh[k] + beta_.value[ch];
      }
    }
  }
  recorded_ = true;
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  const std::size_t hw = static_cast<std::size_t>(g.h) * g.w;
  const double count = static_cast<double>(g.n) * static_cast<double>(hw);
  Tensor dx(g.n, g.c, g.h, g.w);
  for (int ch = 0; ch < channels_; ++ch) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int i = 0; i < g.n; ++i) {
      const double* gp = g.sample(i) + ch * hw;
      const double* xh = xhat_.sample(i) + ch * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum_g += gp[k];
        sum_gx += gp[k] * xh[k];
      }
    }
    gamma_.grad[ch] += sum_gx;
    beta_.grad[ch] += sum_g;
    const double scale = gamma_.value[ch] * inv_std_[ch];
    for (int i = 0; i < g.n; ++i) {
      const double* gp = g.sample(i) + ch * hw;
      const double* xh = xhat_.sample(i) + ch * hw;
      double* d = dx.sample(i) + ch * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        d[k] = batch_stats_ ? scale * (gp[k] - sum_g / count - xh[k] * sum_gx / count)
                            : scale * gp[k];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- StridedSigmoid

Tensor StridedSigmoid::forward(const Tensor& x, bool) {
  Tensor y = x;
  const std::size_t per = x.sample_size();
  for (int i = 0; i < x.n; ++i) {
    double* p = y.sample(i);
    for (std::size_t k = offset_; k < per; k += stride_) {
      // Kept strictly inside (0, 1) even where the logistic rounds to 0 or 1.
      p[k] = std::clamp(1.0 / (1.0 + std::exp(-p[k])), 1e-12, 1.0 - 1e-12);
    }
  }
  output_ = y;
  recorded_ = true;
  return y;
}

Tensor StridedSigmoid::backward(const Tensor& g) {
  require_recorded(recorded_);
  recorded_ = false;
  Tensor dx = g;
  const std::size_t per = g.sample_size();
  for (int i = 0; i < g.n; ++i) {
    double* d = dx.sample(i);
    const double* y = output_.sample(i);
    for (std::size_t k = offset_; k < per; k += stride_) d[k] *= y[k] * (1.0 - y[k]);
  }
  return dx;
}

}  // namespace spnet
