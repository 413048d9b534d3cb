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

#include "iclssl/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "iclssl/errors.hpp"

namespace iclssl {
namespace {

double logsumexp(const Eigen::Ref<const RowVector>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    // Subtract the max first so huge logits keep full relative precision.
    const RowVector shifted = logits.row(i).array() - logits.row(i).maxCoeff();
    out.row(i) = shifted.array() - std::log(shifted.array().exp().sum());
  }
  return out;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  require_same_shape(probs, grad_probs, "softmax backward");
  const Eigen::VectorXd dots = (probs.array() * grad_probs.array()).rowwise().sum();
  return probs.array() * (grad_probs.colwise() - dots).array();
}

LossWithGrad supervised_loss(const Matrix& logits, const Matrix& targets) {
  require_same_shape(logits, targets, "supervised loss");
  require_finite(logits, "logits");
  if (logits.rows() == 0) throw DimensionError("supervised loss on an empty batch");
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  const Matrix logp = log_softmax_rows(logits);
  LossWithGrad out;
  out.value = -(targets.array() * logp.array()).sum() * inv_b;
  // d/dlogits of H(y, softmax) is softmax * sum(y) - y.
  const Eigen::VectorXd mass = targets.rowwise().sum();
  out.grad = (logp.array().exp().colwise() * mass.array() - targets.array()) * inv_b;
  return out;
}

double PseudoLabelBatch::confident_fraction() const {
  if (mask.empty()) return 0.0;
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

std::string_view to_string(PseudoTarget t) { return t == PseudoTarget::hard ? "hard" : "soft"; }

PseudoTarget parse_pseudo_target(std::string_view text) {
  if (text == "hard") return PseudoTarget::hard;
  if (text == "soft") return PseudoTarget::soft;
  throw ConfigError("unknown pseudo_target '" + std::string(text) + "'");
}

PseudoLabelBatch pseudo_labels_from_logits(const Matrix& logits, double tau) {
  require_finite(logits, "pseudo-label logits");
  PseudoLabelBatch pl;
  pl.q_hat = softmax_rows(logits);
  pl.mask.resize(static_cast<std::size_t>(logits.rows()));
  pl.hard_label.resize(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    const double mx = pl.q_hat.row(i).maxCoeff(&arg);
    pl.hard_label[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    pl.mask[static_cast<std::size_t>(i)] = mx >= tau ? 1 : 0;
  }
  return pl;
}

PseudoLabelBatch pseudo_labels(ModelBundle& m, const ImageBatch& weak_batch, double tau, Mode mode) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");
  if (!(weak_batch.shape == m.spec().input)) throw DimensionError("weak batch does not match the model input");
  const Matrix feats = m.encoder.forward(weak_batch.pixels, mode, nullptr);
  return pseudo_labels_from_logits(m.classifier.forward(feats, mode, nullptr), tau);
}

LossWithGrad unsupervised_loss(const PseudoLabelBatch& pl, const Matrix& strong_logits, PseudoTarget target) {
  require_same_shape(pl.q_hat, strong_logits, "unsupervised loss");
  require_finite(strong_logits, "strong logits");
  LossWithGrad out;
  out.grad = Matrix::Zero(strong_logits.rows(), strong_logits.cols());
  if (strong_logits.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(strong_logits.rows());
  const Matrix logp = log_softmax_rows(strong_logits);
  for (Eigen::Index b = 0; b < strong_logits.rows(); ++b) {
    if (pl.mask[static_cast<std::size_t>(b)] == 0) continue;
    RowVector t = RowVector::Zero(strong_logits.cols());
    if (target == PseudoTarget::hard) {
      t[pl.hard_label[static_cast<std::size_t>(b)]] = 1.0;
    } else {
      t = pl.q_hat.row(b);
    }
    out.value -= t.dot(logp.row(b)) * inv_b;
    out.grad.row(b) = (logp.row(b).array().exp() * t.sum() - t.array()) * inv_b;
  }
  return out;
}

std::string_view to_string(NegativesSource s) { return s == NegativesSource::mix_z ? "mix_z" : "raw_z"; }

NegativesSource parse_negatives_source(std::string_view text) {
  if (text == "mix_z") return NegativesSource::mix_z;
  if (text == "raw_z") return NegativesSource::raw_z;
  throw ConfigError("unknown negatives_source '" + std::string(text) + "'");
}

ContrastiveResult contrastive_loss_with_grad(const InterpolationPairBatch& pairs, double temperature,
                                             NegativesSource negatives) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (pairs.size() < 2) throw ConfigError("contrastive loss needs at least 2 pairs");
  require_same_shape(pairs.embed_mix, pairs.mix_z, "contrastive loss");
  const Matrix& a = pairs.embed_mix;
  const Matrix& pos = pairs.mix_z;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_t = 1.0 / temperature;

  ContrastiveResult out;
  if (negatives == NegativesSource::mix_z) {
    const Matrix s = (a * pos.transpose()) * inv_t;
    Matrix w(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lse = logsumexp(s.row(i));
      out.value += (lse - s(i, i)) * inv_n;
      w.row(i) = (s.row(i).array() - lse).exp();
    }
    w.diagonal().array() -= 1.0;
    w *= inv_n;
    out.grad_anchor = w * pos * inv_t;
    out.grad_positive = w.transpose() * a * inv_t;
    out.grad_z = Matrix::Zero(pairs.z.rows(), pairs.z.cols());
    if (!std::isfinite(out.value)) throw NumericError("contrastive loss is not finite");
    return out;
  }

  const Matrix& z = pairs.z;
  if (z.cols() != a.cols() || z.rows() < 2) throw DimensionError("raw_z negatives need per-item embeddings");
  if (pairs.anchor_index.size() != static_cast<std::size_t>(n)) throw DimensionError("pairs lack anchor indices");
  const Matrix sn = (a * z.transpose()) * inv_t;
  out.grad_anchor = Matrix::Zero(n, a.cols());
  out.grad_positive = Matrix::Zero(n, a.cols());
  Matrix dsn = Matrix::Zero(n, z.rows());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const int self = pairs.anchor_index[static_cast<std::size_t>(i)];
    RowVector row(z.rows() + 1);
    row[0] = a.row(i).dot(pos.row(i)) * inv_t;
    row.tail(z.rows()) = sn.row(i);
    row[self + 1] = kNegInf;
    const double lse = logsumexp(row);
    out.value += (lse - row[0]) * inv_n;
    const RowVector w = (row.array() - lse).exp();
    const double dpos = (w[0] - 1.0) * inv_n;
    dsn.row(i) = w.tail(z.rows()) * inv_n;
    out.grad_anchor.row(i) = dpos * pos.row(i) * inv_t;
    out.grad_positive.row(i) = dpos * a.row(i) * inv_t;
  }
  out.grad_anchor += dsn * z * inv_t;
  out.grad_z = dsn.transpose() * a * inv_t;
  if (!std::isfinite(out.value)) throw NumericError("contrastive loss is not finite");
  return out;
}

double contrastive_loss(const InterpolationPairBatch& pairs, double temperature, NegativesSource negatives) {
  return contrastive_loss_with_grad(pairs, temperature, negatives).value;
}

LossWithGrad consistency_mse(const Matrix& p1, const Matrix& p2) {
  require_same_shape(p1, p2, "consistency loss");
  LossWithGrad out;
  if (p1.rows() == 0) {
    out.grad = Matrix::Zero(0, p1.cols());
    return out;
  }
  const double inv_b = 1.0 / static_cast<double>(p1.rows());
  const Matrix diff = p1 - p2;
  out.value = diff.squaredNorm() * inv_b;
  out.grad = 2.0 * inv_b * diff;
  return out;
}

LossReport total_loss(double L_x, double L_u, double L_c, double loss_alpha, double confident_fraction) {
  const std::pair<const char*, double> parts[] = {{"L_x", L_x}, {"L_u", L_u}, {"L_c", L_c}, {"loss_alpha", loss_alpha}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string(name) + " is not finite");
  }
  return LossReport{L_x, L_u, L_c, L_x + L_u + loss_alpha * L_c, confident_fraction};
}

}  // namespace iclssl
