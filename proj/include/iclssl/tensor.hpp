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

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace iclssl {

/// Row-major so that one row is one sample (image flattened CHW, or a
/// feature / logit / embedding vector).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct ImageShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  [[nodiscard]] int size() const { return channels * height * width; }
  [[nodiscard]] int plane() const { return height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

std::string to_string(const ImageShape& shape);

/// A batch of images (batch x channels x height x width) with pixels in
/// [0,1]. `labels` is empty for unlabeled data.
struct ImageBatch {
  ImageShape shape;
  Matrix pixels;
  std::vector<int> labels;

  [[nodiscard]] int size() const { return static_cast<int>(pixels.rows()); }
  [[nodiscard]] bool labeled() const { return !labels.empty(); }

  /// Copy of the rows named by `indices`, labels included.
  [[nodiscard]] ImageBatch select(std::span<const int> indices) const;
};

/// batch x classes one-hot matrix; throws DimensionError on out-of-range labels.
Matrix one_hot(std::span<const int> labels, int classes);

/// Throws DimensionError when a.rows/cols differ from b's.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

}  // namespace iclssl
