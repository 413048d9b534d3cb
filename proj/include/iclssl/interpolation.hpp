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

#include <string_view>
#include <vector>

#include "iclssl/layers.hpp"
#include "iclssl/model.hpp"
#include "iclssl/rng.hpp"
#include "iclssl/tensor.hpp"

namespace iclssl {

/// `derangement`: every item i is paired with one partner drawn from a
/// seeded fixed-point-free permutation (B pairs). `all_pairs`: every
/// ordered pair (i, j) with i != j (B(B-1) pairs).
enum class PairMode { derangement, all_pairs };

std::string_view to_string(PairMode mode);
PairMode parse_pair_mode(std::string_view text);

/// Which items and weights each positive pair combines.
struct PairPlan {
  std::vector<int> anchor_index;
  std::vector<int> partner_index;
  std::vector<double> lambdas;

  [[nodiscard]] int size() const { return static_cast<int>(lambdas.size()); }
};

/// One positive pair per row: `embed_mix` interpolates the (normalised)
/// embeddings of the two items, `mix_z` embeds the interpolated input.
/// `z` holds the per-item embeddings the interpolation started from.
struct InterpolationPairBatch {
  std::vector<double> lambdas;
  std::vector<int> anchor_index;
  std::vector<int> partner_index;
  Matrix mix_z;
  Matrix embed_mix;
  Matrix z;

  [[nodiscard]] int size() const { return static_cast<int>(lambdas.size()); }
};

/// Draw from Beta(beta_param, beta_param); ConfigError unless beta_param > 0.
double sample_lambda(double beta_param, Rng& rng);

/// lambda * a + (1 - lambda) * b. Both interpolators share this exact
/// expression, so linear maps commute with them bit-for-bit.
RowVector interpolate_inputs(const RowVector& a, const RowVector& b, double lambda);
RowVector interpolate_embeddings(const RowVector& a, const RowVector& b, double lambda);

/// Uniformly random fixed-point-free permutation (rejection sampling).
/// ConfigError for n < 2.
std::vector<int> random_derangement(int n, Rng& rng);

PairPlan plan_pairs(int batch_size, PairMode mode, double beta_param, Rng& rng);

struct PairOptions {
  PairMode mode = PairMode::derangement;
  /// Disable only in test harnesses: skips the l2 normalisation of both
  /// branches so a linear F makes the two branches coincide.
  bool normalize = true;
};

/// Inference-mode pair construction over an unlabeled batch.
InterpolationPairBatch build_positive_pairs(ModelBundle& m, const ImageBatch& batch, double beta_param, Rng& rng,
                                            const PairOptions& opts = {});
InterpolationPairBatch build_positive_pairs(ModelBundle& m, const ImageBatch& batch, const PairPlan& plan,
                                            const PairOptions& opts = {});

/// Differentiable variant used by the trainer: keeps both forward traces.
struct PairForward {
  InterpolationPairBatch pairs;
  bool normalize = true;
  Matrix raw_items;  // projector output per item before normalisation
  Matrix raw_mix;    // projector output per mixed input before normalisation
  LayerTrace encoder_items, projector_items;
  LayerTrace encoder_mix, projector_mix;
};

PairForward forward_positive_pairs(ModelBundle& m, const ImageBatch& batch, const PairPlan& plan, Mode mode,
                                   bool normalize = true);

/// Accumulates parameter gradients given dL/dembed_mix, dL/dmix_z and
/// optionally dL/dz (raw-z negatives).
void backward_positive_pairs(ModelBundle& m, const PairForward& fwd, const Matrix& grad_embed_mix,
                             const Matrix& grad_mix_z, const Matrix* grad_z = nullptr);

struct MixupSample {
  RowVector x;
  RowVector y;
  double lambda;  // max(l, 1 - l) >= 0.5
};

/// Classic mixup with the dominant-weight rule: l ~ Beta(alpha, beta_shape),
/// l' = max(l, 1 - l), x' = l' x1 + (1 - l') x2, same for y.
MixupSample mixup(const RowVector& x1, const RowVector& y1, const RowVector& x2, const RowVector& y2, double alpha,
                  double beta_shape, Rng& rng);
/// Deterministic core for a given raw draw `lambda`.
MixupSample mixup_with_lambda(const RowVector& x1, const RowVector& y1, const RowVector& x2, const RowVector& y2,
                              double lambda);

}  // namespace iclssl
