// Copyright 2026 The iclssl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iclssl/layers.hpp"

#include <cmath>
#include <limits>

#include "iclssl/errors.hpp"

namespace iclssl {
namespace {

Param make_param(std::string name, int rows, int cols, bool trainable = true) {
  return Param{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), trainable};
}

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

}  // namespace

void Layer::check_input(const Matrix& x) const {
  if (x.cols() != input_size()) {
    throw DimensionError(kind() + " expects rows of size " + std::to_string(input_size()) + ", got " +
                         std::to_string(x.cols()));
  }
}

// Linear ---------------------------------------------------------------------

Linear::Linear(int in, int out, Rng& rng)
    : in_(in), out_(out), weight_(make_param("weight", out, in)), bias_(make_param("bias", 1, out)) {
  if (in <= 0 || out <= 0) throw DimensionError("linear layer sizes must be positive");
  // PyTorch's default: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(weight_.value, bound, rng);
  fill_uniform(bias_.value, bound, rng);
}

Matrix Linear::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  if (trace != nullptr) {
    trace->mode = mode;
    trace->input = x;
  }
  Matrix y = x * weight_.value.transpose();
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out, const LayerTrace& trace) {
  weight_.grad.noalias() += grad_out.transpose() * trace.input;
  bias_.grad.row(0) += grad_out.colwise().sum();
  return grad_out * weight_.value;
}

// Relu -----------------------------------------------------------------------

Matrix Relu::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  if (trace != nullptr) {
    trace->mode = mode;
    trace->input = x;
  }
  return x.cwiseMax(0.0);
}

Matrix Relu::backward(const Matrix& grad_out, const LayerTrace& trace) {
  return (trace.input.array() > 0.0).select(grad_out, 0.0);
}

// Conv2d ---------------------------------------------------------------------

Conv2d::Conv2d(ImageShape in, int out_channels, int kernel, int stride, int pad, Rng& rng, bool bias)
    : in_(in), kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias) {
  if (kernel <= 0 || stride <= 0 || pad < 0 || out_channels <= 0) {
    throw DimensionError("invalid convolution geometry");
  }
  out_.channels = out_channels;
  out_.height = (in.height + 2 * pad - kernel) / stride + 1;
  out_.width = (in.width + 2 * pad - kernel) / stride + 1;
  if (out_.height <= 0 || out_.width <= 0) throw DimensionError("convolution output would be empty");
  const int fan_in = in.channels * kernel * kernel;
  weight_ = make_param("weight", out_channels, fan_in);
  bias_ = make_param("bias", 1, out_channels);
  // He-uniform; the nets place ReLU after every convolution.
  fill_uniform(weight_.value, std::sqrt(6.0 / fan_in), rng);
}

std::vector<Param*> Conv2d::params() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

Matrix Conv2d::im2col(const Eigen::Ref<const RowVector>& image) const {
  Matrix cols(in_.channels * kernel_ * kernel_, out_.plane());
  for (int c = 0; c < in_.channels; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const int row = (c * kernel_ + ky) * kernel_ + kx;
        for (int oy = 0; oy < out_.height; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          for (int ox = 0; ox < out_.width; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            const bool inside = iy >= 0 && ix >= 0 && iy < in_.height && ix < in_.width;
            cols(row, oy * out_.width + ox) = inside ? image[c * in_.plane() + iy * in_.width + ix] : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

void Conv2d::col2im(const Matrix& cols, Eigen::Ref<RowVector> image) const {
  for (int c = 0; c < in_.channels; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const int row = (c * kernel_ + ky) * kernel_ + kx;
        for (int oy = 0; oy < out_.height; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= in_.height) continue;
          for (int ox = 0; ox < out_.width; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= in_.width) continue;
            image[c * in_.plane() + iy * in_.width + ix] += cols(row, oy * out_.width + ox);
          }
        }
      }
    }
  }
}

Matrix Conv2d::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  if (trace != nullptr) {
    trace->mode = mode;
    trace->input = x;
  }
  Matrix y(x.rows(), out_.size());
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    Matrix out = weight_.value * im2col(x.row(n));
    if (has_bias_) out.colwise() += bias_.value.row(0).transpose();
    y.row(n) = Eigen::Map<const RowVector>(out.data(), out.size());
  }
  return y;
}

Matrix Conv2d::backward(const Matrix& grad_out, const LayerTrace& trace) {
  Matrix dx = Matrix::Zero(grad_out.rows(), in_.size());
  for (Eigen::Index n = 0; n < grad_out.rows(); ++n) {
    const Matrix cols = im2col(trace.input.row(n));
    const Eigen::Map<const Matrix> g(grad_out.row(n).data(), out_.channels, out_.plane());
    weight_.grad.noalias() += g * cols.transpose();
    if (has_bias_) bias_.grad.row(0) += g.rowwise().sum().transpose();
    const Matrix dcols = weight_.value.transpose() * g;
    col2im(dcols, dx.row(n));
  }
  return dx;
}

// MaxPool2d ------------------------------------------------------------------

MaxPool2d::MaxPool2d(ImageShape in, int window) : in_(in), window_(window) {
  if (window <= 0 || in.height < window || in.width < window) throw DimensionError("invalid pooling window");
  out_ = {in.channels, in.height / window, in.width / window};
}

Matrix MaxPool2d::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  Matrix y(x.rows(), out_.size());
  std::vector<int> argmax(static_cast<std::size_t>(x.rows() * out_.size()));
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (int c = 0; c < out_.channels; ++c) {
      for (int oy = 0; oy < out_.height; ++oy) {
        for (int ox = 0; ox < out_.width; ++ox) {
          int best = -1;
          double best_v = -std::numeric_limits<double>::infinity();
          for (int wy = 0; wy < window_; ++wy) {
            for (int wx = 0; wx < window_; ++wx) {
              const int idx = c * in_.plane() + (oy * window_ + wy) * in_.width + ox * window_ + wx;
              if (x(n, idx) > best_v || best < 0) {
                best_v = x(n, idx);
                best = idx;
              }
            }
          }
          const int o = c * out_.plane() + oy * out_.width + ox;
          y(n, o) = best_v;
          argmax[static_cast<std::size_t>(n * out_.size() + o)] = best;
        }
      }
    }
  }
  if (trace != nullptr) {
    trace->mode = mode;
    trace->index = std::move(argmax);
  }
  return y;
}

Matrix MaxPool2d::backward(const Matrix& grad_out, const LayerTrace& trace) {
  Matrix dx = Matrix::Zero(grad_out.rows(), in_.size());
  for (Eigen::Index n = 0; n < grad_out.rows(); ++n) {
    for (int o = 0; o < out_.size(); ++o) {
      dx(n, trace.index[static_cast<std::size_t>(n * out_.size() + o)]) += grad_out(n, o);
    }
  }
  return dx;
}

// GlobalAvgPool --------------------------------------------------------------

Matrix GlobalAvgPool::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  if (trace != nullptr) trace->mode = mode;
  Matrix y(x.rows(), in_.channels);
  for (int c = 0; c < in_.channels; ++c) {
    y.col(c) = x.middleCols(c * in_.plane(), in_.plane()).rowwise().mean();
  }
  return y;
}

Matrix GlobalAvgPool::backward(const Matrix& grad_out, const LayerTrace&) {
  Matrix dx(grad_out.rows(), in_.size());
  const double scale = 1.0 / in_.plane();
  for (int c = 0; c < in_.channels; ++c) {
    dx.middleCols(c * in_.plane(), in_.plane()) = (grad_out.col(c) * scale).replicate(1, in_.plane());
  }
  return dx;
}

// BatchNorm2d ----------------------------------------------------------------

BatchNorm2d::BatchNorm2d(ImageShape in, double momentum, double eps)
    : in_(in),
      momentum_(momentum),
      eps_(eps),
      gamma_(make_param("gamma", 1, in.channels)),
      beta_(make_param("beta", 1, in.channels)),
      running_mean_(make_param("running_mean", 1, in.channels, false)),
      running_var_(make_param("running_var", 1, in.channels, false)) {
  gamma_.value.setOnes();
  running_var_.value.setOnes();
}

Matrix BatchNorm2d::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  const int plane = in_.plane();
  Matrix y(x.rows(), x.cols());
  Matrix xhat(x.rows(), x.cols());
  RowVector inv_std(in_.channels);
  for (int c = 0; c < in_.channels; ++c) {
    const auto block = x.middleCols(c * plane, plane);
    double mean = running_mean_.value(0, c);
    double var = running_var_.value(0, c);
    if (mode == Mode::train) {
      const double count = static_cast<double>(block.size());
      mean = block.mean();
      var = (block.array() - mean).square().sum() / count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean_.value(0, c) = (1 - momentum_) * running_mean_.value(0, c) + momentum_ * mean;
      running_var_.value(0, c) = (1 - momentum_) * running_var_.value(0, c) + momentum_ * unbiased;
    }
    inv_std[c] = 1.0 / std::sqrt(var + eps_);
    xhat.middleCols(c * plane, plane) = (block.array() - mean) * inv_std[c];
    y.middleCols(c * plane, plane) =
        xhat.middleCols(c * plane, plane).array() * gamma_.value(0, c) + beta_.value(0, c);
  }
  if (trace != nullptr) {
    trace->mode = mode;
    trace->aux = std::move(xhat);
    trace->aux_vec = std::move(inv_std);
  }
  return y;
}

Matrix BatchNorm2d::backward(const Matrix& grad_out, const LayerTrace& trace) {
  const int plane = in_.plane();
  Matrix dx(grad_out.rows(), grad_out.cols());
  for (int c = 0; c < in_.channels; ++c) {
    const auto g = grad_out.middleCols(c * plane, plane).array();
    const auto xhat = trace.aux.middleCols(c * plane, plane).array();
    gamma_.grad(0, c) += (g * xhat).sum();
    beta_.grad(0, c) += g.sum();
    const double scale = gamma_.value(0, c) * trace.aux_vec[c];
    if (trace.mode == Mode::train) {
      const double m = static_cast<double>(g.size());
      const double sum_g = g.sum();
      const double sum_gx = (g * xhat).sum();
      dx.middleCols(c * plane, plane) = scale * (g - sum_g / m - xhat * (sum_gx / m));
    } else {
      dx.middleCols(c * plane, plane) = scale * g;
    }
  }
  return dx;
}

// Sequential -----------------------------------------------------------------

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

void Sequential::append(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->output_size() != layer->input_size()) {
    throw DimensionError("cannot append " + layer->kind() + " with input " + std::to_string(layer->input_size()) +
                         " after " + layers_.back()->kind() + " with output " +
                         std::to_string(layers_.back()->output_size()));
  }
  layers_.push_back(std::move(layer));
}

int Sequential::input_size() const { return layers_.empty() ? 0 : layers_.front()->input_size(); }
int Sequential::output_size() const { return layers_.empty() ? 0 : layers_.back()->output_size(); }

Matrix Sequential::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  if (layers_.empty()) return x;
  check_input(x);
  if (trace != nullptr) {
    trace->mode = mode;
    trace->children.assign(layers_.size(), LayerTrace{});
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, mode, trace != nullptr ? &trace->children[i] : nullptr);
  }
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out, const LayerTrace& trace) {
  if (trace.children.size() != layers_.size()) throw Error("sequential backward without a matching trace");
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, trace.children[i]);
  }
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// WideBasicBlock ------------------------------------------------------------

WideBasicBlock::WideBasicBlock(ImageShape in, int out_channels, int stride, Rng& rng) : in_(in) {
  pre_.emplace<BatchNorm2d>(in);
  pre_.emplace<Relu>(in.size());
  auto& conv1 = body_.emplace<Conv2d>(in, out_channels, 3, stride, 1, rng, false);
  const ImageShape mid = conv1.output_shape();
  body_.emplace<BatchNorm2d>(mid);
  body_.emplace<Relu>(mid.size());
  auto& conv2 = body_.emplace<Conv2d>(mid, out_channels, 3, 1, 1, rng, false);
  out_ = conv2.output_shape();
  if (!(in == out_)) shortcut_.emplace<Conv2d>(in, out_channels, 1, stride, 0, rng, false);
}

Matrix WideBasicBlock::forward(const Matrix& x, Mode mode, LayerTrace* trace) {
  check_input(x);
  LayerTrace* pre_t = nullptr;
  LayerTrace* body_t = nullptr;
  LayerTrace* short_t = nullptr;
  if (trace != nullptr) {
    trace->mode = mode;
    trace->children.assign(3, LayerTrace{});
    pre_t = &trace->children[0];
    body_t = &trace->children[1];
    short_t = &trace->children[2];
  }
  const Matrix act = pre_.forward(x, mode, pre_t);
  Matrix y = body_.forward(act, mode, body_t);
  if (shortcut_.size() > 0) {
    y += shortcut_.forward(act, mode, short_t);
  } else {
    y += x;
  }
  return y;
}

Matrix WideBasicBlock::backward(const Matrix& grad_out, const LayerTrace& trace) {
  Matrix dact = body_.backward(grad_out, trace.children[1]);
  if (shortcut_.size() > 0) dact += shortcut_.backward(grad_out, trace.children[2]);
  Matrix dx = pre_.backward(dact, trace.children[0]);
  if (shortcut_.size() == 0) dx += grad_out;
  return dx;
}

std::vector<Param*> WideBasicBlock::params() {
  std::vector<Param*> out = pre_.params();
  for (auto* p : body_.params()) out.push_back(p);
  for (auto* p : shortcut_.params()) out.push_back(p);
  return out;
}

}  // namespace iclssl
