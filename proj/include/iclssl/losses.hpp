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

#include <cstdint>
#include <string_view>
#include <vector>

#include "iclssl/interpolation.hpp"
#include "iclssl/model.hpp"
#include "iclssl/tensor.hpp"

namespace iclssl {

/// A scalar loss and its gradient with respect to the loss's first input.
struct LossWithGrad {
  double value = 0.0;
  Matrix grad;
};

/// Numerically stable row-wise log-softmax.
Matrix log_softmax_rows(const Matrix& logits);
/// Backpropagates dL/dp through p = softmax(logits).
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

/// Mean cross-entropy H(y_b, softmax(logits_b)). `targets` rows are label
/// distributions (one-hot for hard labels). Gradient is wrt logits.
LossWithGrad supervised_loss(const Matrix& logits, const Matrix& targets);

struct PseudoLabelBatch {
  Matrix q_hat;
  std::vector<std::uint8_t> mask;  // 1 iff max(q_hat row) >= tau
  std::vector<int> hard_label;

  [[nodiscard]] int size() const { return static_cast<int>(mask.size()); }
  [[nodiscard]] double confident_fraction() const;
};

enum class PseudoTarget { hard, soft };
std::string_view to_string(PseudoTarget t);
PseudoTarget parse_pseudo_target(std::string_view text);

/// Pseudo-labels from weak-view logits. The result is a plain value: no
/// gradient ever flows back through it.
PseudoLabelBatch pseudo_labels_from_logits(const Matrix& logits, double tau);
PseudoLabelBatch pseudo_labels(ModelBundle& m, const ImageBatch& weak_batch, double tau, Mode mode = Mode::eval);

/// (1 / rows) * sum_b mask_b * H(target_b, softmax(strong_logits_b)); the
/// target is the argmax one-hot (hard) or q_hat itself (soft). Gradient is
/// wrt strong_logits. With mu = 1 the unlabeled batch has B rows.
LossWithGrad unsupervised_loss(const PseudoLabelBatch& pl, const Matrix& strong_logits,
                               PseudoTarget target = PseudoTarget::hard);

/// Which rows form the contrastive denominator besides the positive.
enum class NegativesSource { mix_z, raw_z };
std::string_view to_string(NegativesSource s);
NegativesSource parse_negatives_source(std::string_view text);

struct ContrastiveResult {
  double value = 0.0;
  Matrix grad_anchor;    // wrt embed_mix
  Matrix grad_positive;  // wrt mix_z
  Matrix grad_z;         // wrt z (raw_z negatives only; zero otherwise)
};

/// InfoNCE over the pair batch with anchor embed_mix_i:
///   mean_i -log( exp(<a_i, mix_z_i>/T) / sum_k exp(<a_i, c_k>/T) )
/// For mix_z negatives the candidates c_k range over every mix_z row
/// (k = i is the positive). For raw_z negatives they are mix_z_i plus
/// z_k for every item k other than the pair's anchor item.
ContrastiveResult contrastive_loss_with_grad(const InterpolationPairBatch& pairs, double temperature,
                                             NegativesSource negatives = NegativesSource::mix_z);
double contrastive_loss(const InterpolationPairBatch& pairs, double temperature,
                        NegativesSource negatives = NegativesSource::mix_z);

/// Mean over rows of ||p1_b - p2_b||^2. Gradient is wrt p1 (the student).
LossWithGrad consistency_mse(const Matrix& p1, const Matrix& p2);

struct LossReport {
  double L_x = 0.0;
  double L_u = 0.0;
  double L_c = 0.0;
  double total = 0.0;
  double confident_fraction = 0.0;
};

/// total = L_x + L_u + loss_alpha * L_c; NumericError naming the first
/// non-finite component.
LossReport total_loss(double L_x, double L_u, double L_c, double loss_alpha, double confident_fraction = 0.0);

}  // namespace iclssl
