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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "iclssl/layers.hpp"
#include "iclssl/rng.hpp"
#include "iclssl/tensor.hpp"

namespace iclssl {

/// `linear` is a diagnostic architecture (one affine map per head) used to
/// check the interpolation branches against each other.
enum class Architecture { linear, mlp2, smallcnn, wrn28 };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view text);

struct ModelSpec {
  Architecture arch = Architecture::mlp2;
  ImageShape input;
  int classes = 10;
  int embed_dim = 64;
  /// Feature width for linear/mlp2; ignored by the convolutional nets.
  int hidden = 256;
  int wrn_widen = 2;
};

struct NamedParam {
  std::string name;
  Param* param;
};

/// Encoder f, classifier head h and projector head g. Both heads consume
/// the encoder features directly.
class ModelBundle {
 public:
  ModelBundle() = default;
  static ModelBundle create(const ModelSpec& spec, Rng& rng);

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] int feature_dim() const { return encoder.output_size(); }

  std::vector<NamedParam> named_params();
  void zero_grad();

  Sequential encoder;
  Sequential classifier;
  Sequential projector;

 private:
  ModelSpec spec_;
};

using FeatureBatch = Matrix;
using LogitBatch = Matrix;
using EmbeddingBatch = Matrix;

/// Inference-mode forward passes. Throw DimensionError on shape mismatch.
FeatureBatch encode(ModelBundle& m, const ImageBatch& batch);
LogitBatch classify(ModelBundle& m, const FeatureBatch& features);
/// With `normalize`, rows are l2-normalised and a pre-normalisation row with
/// norm < kMinEmbeddingNorm throws DegenerateEmbeddingError.
EmbeddingBatch project(ModelBundle& m, const FeatureBatch& features, bool normalize = true);

inline constexpr double kMinEmbeddingNorm = 1e-12;

Matrix normalize_rows(const Matrix& raw);
/// Gradient of L(normalize_rows(raw)) wrt raw given dL/d(normalized):
/// (g - y (y . g)) / ||raw|| per row.
Matrix normalize_rows_backward(const Matrix& raw, const Matrix& normalized, const Matrix& grad);

Matrix softmax_rows(const Matrix& logits);

struct Checkpoint {
  ModelBundle model;
  std::string config_text;
};

/// Versioned binary container: architecture, shapes, every parameter and
/// buffer (raw IEEE doubles) and a config snapshot. Written atomically.
void save_checkpoint(const std::filesystem::path& path, ModelBundle& model, std::string_view config_text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace iclssl
