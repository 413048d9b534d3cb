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

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "iclssl/rng.hpp"
#include "iclssl/tensor.hpp"

namespace iclssl {

enum class Mode { train, eval };

/// Trainable array (`trainable == false` marks buffers such as batch-norm
/// running statistics, which are saved and averaged but never stepped).
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

/// Everything a layer's forward pass has to remember for its backward pass.
struct LayerTrace {
  Mode mode = Mode::eval;
  Matrix input;
  Matrix aux;
  RowVector aux_vec;
  std::vector<int> index;
  std::vector<LayerTrace> children;
};

/// Batched layer. Rows are samples; image layers interpret a row as a
/// flattened CHW tensor of their declared input shape.
///
/// `forward` records into `trace` when it is non-null; `backward`
/// accumulates into the layer's Param::grad and returns the gradient
/// with respect to the layer input. Forward passes in Mode::eval never
/// mutate the layer.
class Layer {
 public:
  virtual ~Layer() = default;

  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual int input_size() const = 0;
  [[nodiscard]] virtual int output_size() const = 0;

  virtual Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) = 0;
  virtual Matrix backward(const Matrix& grad_out, const LayerTrace& trace) = 0;

  virtual std::vector<Param*> params() { return {}; }
  [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  void check_input(const Matrix& x) const;
};

class Linear final : public Layer {
 public:
  Linear(int in, int out, Rng& rng);

  std::string kind() const override { return "linear"; }
  int input_size() const override { return in_; }
  int output_size() const override { return out_; }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

  /// weight is out x in; y = x W^T + b.
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_;
  int out_;
  Param weight_;
  Param bias_;
};

class Relu final : public Layer {
 public:
  explicit Relu(int size) : size_(size) {}

  std::string kind() const override { return "relu"; }
  int input_size() const override { return size_; }
  int output_size() const override { return size_; }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  int size_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(ImageShape in, int out_channels, int kernel, int stride, int pad, Rng& rng, bool bias = true);

  std::string kind() const override { return "conv2d"; }
  int input_size() const override { return in_.size(); }
  int output_size() const override { return out_.size(); }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::vector<Param*> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  [[nodiscard]] const ImageShape& output_shape() const { return out_; }

 private:
  Matrix im2col(const Eigen::Ref<const RowVector>& image) const;
  void col2im(const Matrix& cols, Eigen::Ref<RowVector> image) const;

  ImageShape in_;
  ImageShape out_;
  int kernel_;
  int stride_;
  int pad_;
  bool has_bias_;
  Param weight_;  // out_channels x (in_channels * k * k)
  Param bias_;    // 1 x out_channels
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(ImageShape in, int window);

  std::string kind() const override { return "maxpool2d"; }
  int input_size() const override { return in_.size(); }
  int output_size() const override { return out_.size(); }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2d>(*this); }

  [[nodiscard]] const ImageShape& output_shape() const { return out_; }

 private:
  ImageShape in_;
  ImageShape out_;
  int window_;
};

/// Mean over each channel's spatial plane: C x H x W -> C.
class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(ImageShape in) : in_(in) {}

  std::string kind() const override { return "global_avg_pool"; }
  int input_size() const override { return in_.size(); }
  int output_size() const override { return in_.channels; }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  ImageShape in_;
};

/// Per-channel batch normalisation over (batch, height, width).
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(ImageShape in, double momentum = 0.1, double eps = 1e-5);

  std::string kind() const override { return "batchnorm2d"; }
  int input_size() const override { return in_.size(); }
  int output_size() const override { return in_.size(); }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2d>(*this); }

 private:
  ImageShape in_;
  double momentum_;
  double eps_;
  Param gamma_;
  Param beta_;
  Param running_mean_;
  Param running_var_;
};

/// Ordered composition; itself a Layer so blocks can nest.
class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    append(std::move(layer));
    return ref;
  }
  void append(std::unique_ptr<Layer> layer);

  std::string kind() const override { return "sequential"; }
  int input_size() const override;
  int output_size() const override;
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::vector<Param*> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }

  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  [[nodiscard]] const Layer& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Pre-activation wide residual block:
/// y = body(pre(x)) + shortcut, where shortcut is x when shapes agree and a
/// strided 1x1 convolution of pre(x) otherwise.
class WideBasicBlock final : public Layer {
 public:
  WideBasicBlock(ImageShape in, int out_channels, int stride, Rng& rng);

  std::string kind() const override { return "wide_basic"; }
  int input_size() const override { return in_.size(); }
  int output_size() const override { return out_.size(); }
  Matrix forward(const Matrix& x, Mode mode, LayerTrace* trace) override;
  Matrix backward(const Matrix& grad_out, const LayerTrace& trace) override;
  std::vector<Param*> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<WideBasicBlock>(*this); }

  [[nodiscard]] const ImageShape& output_shape() const { return out_; }

 private:
  ImageShape in_;
  ImageShape out_;
  Sequential pre_;
  Sequential body_;
  Sequential shortcut_;  // empty for identity
};

}  // namespace iclssl
