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

#include "iclssl/interpolation.hpp"

#include <algorithm>
#include <string>

#include "iclssl/errors.hpp"

namespace iclssl {
namespace {

Matrix gather_mixed(const Matrix& items, const PairPlan& plan) {
  Matrix out(plan.size(), items.cols());
  for (int p = 0; p < plan.size(); ++p) {
    out.row(p) = interpolate_inputs(items.row(plan.anchor_index[static_cast<std::size_t>(p)]),
                                    items.row(plan.partner_index[static_cast<std::size_t>(p)]),
                                    plan.lambdas[static_cast<std::size_t>(p)]);
  }
  return out;
}

Matrix combine_embeddings(const Matrix& z, const PairPlan& plan) {
  Matrix out(plan.size(), z.cols());
  for (int p = 0; p < plan.size(); ++p) {
    out.row(p) = interpolate_embeddings(z.row(plan.anchor_index[static_cast<std::size_t>(p)]),
                                        z.row(plan.partner_index[static_cast<std::size_t>(p)]),
                                        plan.lambdas[static_cast<std::size_t>(p)]);
  }
  return out;
}

void check_plan(const PairPlan& plan, int batch_size) {
  if (plan.anchor_index.size() != plan.lambdas.size() || plan.partner_index.size() != plan.lambdas.size()) {
    throw DimensionError("pair plan arrays have different lengths");
  }
  for (int p = 0; p < plan.size(); ++p) {
    const auto i = plan.anchor_index[static_cast<std::size_t>(p)];
    const auto j = plan.partner_index[static_cast<std::size_t>(p)];
    const auto l = plan.lambdas[static_cast<std::size_t>(p)];
    if (i < 0 || j < 0 || i >= batch_size || j >= batch_size) throw DimensionError("pair index out of range");
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("interpolation weight outside [0,1]");
  }
}

}  // namespace

std::string_view to_string(PairMode mode) {
  return mode == PairMode::derangement ? "derangement" : "all_pairs";
}

PairMode parse_pair_mode(std::string_view text) {
  if (text == "derangement") return PairMode::derangement;
  if (text == "all_pairs") return PairMode::all_pairs;
  throw ConfigError("unknown pair_mode '" + std::string(text) + "'");
}

double sample_lambda(double beta_param, Rng& rng) {
  if (!(beta_param > 0.0)) throw ConfigError("beta_param must be > 0");
  return std::clamp(rng.beta(beta_param, beta_param), 0.0, 1.0);
}

RowVector interpolate_inputs(const RowVector& a, const RowVector& b, double lambda) {
  if (a.size() != b.size()) throw DimensionError("cannot interpolate inputs of different size");
  return lambda * a + (1.0 - lambda) * b;
}

RowVector interpolate_embeddings(const RowVector& a, const RowVector& b, double lambda) {
  if (a.size() != b.size()) throw DimensionError("cannot interpolate embeddings of different dimension");
  return lambda * a + (1.0 - lambda) * b;
}

std::vector<int> random_derangement(int n, Rng& rng) {
  if (n < 2) throw ConfigError("a derangement needs at least 2 items");
  for (;;) {
    std::vector<int> p = rng.permutation(n);
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) ok = p[static_cast<std::size_t>(i)] != i;
    if (ok) return p;
  }
}

PairPlan plan_pairs(int batch_size, PairMode mode, double beta_param, Rng& rng) {
  if (batch_size < 2) throw ConfigError("positive pairs need a batch of at least 2 items");
  if (!(beta_param > 0.0)) throw ConfigError("beta_param must be > 0");
  PairPlan plan;
  if (mode == PairMode::derangement) {
    const auto partner = random_derangement(batch_size, rng);
    for (int i = 0; i < batch_size; ++i) {
      plan.anchor_index.push_back(i);
      plan.partner_index.push_back(partner[static_cast<std::size_t>(i)]);
      plan.lambdas.push_back(sample_lambda(beta_param, rng));
    }
  } else {
    for (int i = 0; i < batch_size; ++i) {
      for (int j = 0; j < batch_size; ++j) {
        if (i == j) continue;
        plan.anchor_index.push_back(i);
        plan.partner_index.push_back(j);
        plan.lambdas.push_back(sample_lambda(beta_param, rng));
      }
    }
  }
  return plan;
}

PairForward forward_positive_pairs(ModelBundle& m, const ImageBatch& batch, const PairPlan& plan, Mode mode,
                                   bool normalize) {
  if (batch.size() < 2) throw ConfigError("positive pairs need a batch of at least 2 items");
  if (!(batch.shape == m.spec().input)) throw DimensionError("unlabeled batch does not match the model input");
  check_plan(plan, batch.size());
  PairForward f;
  f.normalize = normalize;
  f.pairs.lambdas = plan.lambdas;
  f.pairs.anchor_index = plan.anchor_index;
  f.pairs.partner_index = plan.partner_index;

  const Matrix feats = m.encoder.forward(batch.pixels, mode, &f.encoder_items);
  f.raw_items = m.projector.forward(feats, mode, &f.projector_items);
  f.pairs.z = normalize ? normalize_rows(f.raw_items) : f.raw_items;
  f.pairs.embed_mix = combine_embeddings(f.pairs.z, plan);

  const Matrix mixed = gather_mixed(batch.pixels, plan);
  const Matrix mix_feats = m.encoder.forward(mixed, mode, &f.encoder_mix);
  f.raw_mix = m.projector.forward(mix_feats, mode, &f.projector_mix);
  f.pairs.mix_z = normalize ? normalize_rows(f.raw_mix) : f.raw_mix;
  return f;
}

void backward_positive_pairs(ModelBundle& m, const PairForward& f, const Matrix& grad_embed_mix,
                             const Matrix& grad_mix_z, const Matrix* grad_z) {
  require_same_shape(grad_embed_mix, f.pairs.embed_mix, "embed_mix gradient");
  require_same_shape(grad_mix_z, f.pairs.mix_z, "mix_z gradient");

  Matrix dz = Matrix::Zero(f.pairs.z.rows(), f.pairs.z.cols());
  if (grad_z != nullptr) {
    require_same_shape(*grad_z, f.pairs.z, "z gradient");
    dz = *grad_z;
  }
  for (int p = 0; p < f.pairs.size(); ++p) {
    const double l = f.pairs.lambdas[static_cast<std::size_t>(p)];
    dz.row(f.pairs.anchor_index[static_cast<std::size_t>(p)]) += l * grad_embed_mix.row(p);
    dz.row(f.pairs.partner_index[static_cast<std::size_t>(p)]) += (1.0 - l) * grad_embed_mix.row(p);
  }
  const Matrix draw_items = f.normalize ? normalize_rows_backward(f.raw_items, f.pairs.z, dz) : dz;
  m.encoder.backward(m.projector.backward(draw_items, f.projector_items), f.encoder_items);

  const Matrix draw_mix = f.normalize ? normalize_rows_backward(f.raw_mix, f.pairs.mix_z, grad_mix_z) : grad_mix_z;
  m.encoder.backward(m.projector.backward(draw_mix, f.projector_mix), f.encoder_mix);
}

InterpolationPairBatch build_positive_pairs(ModelBundle& m, const ImageBatch& batch, const PairPlan& plan,
                                            const PairOptions& opts) {
  return forward_positive_pairs(m, batch, plan, Mode::eval, opts.normalize).pairs;
}

InterpolationPairBatch build_positive_pairs(ModelBundle& m, const ImageBatch& batch, double beta_param, Rng& rng,
                                            const PairOptions& opts) {
  if (batch.size() < 2) throw ConfigError("positive pairs need a batch of at least 2 items");
  const PairPlan plan = plan_pairs(batch.size(), opts.mode, beta_param, rng);
  return build_positive_pairs(m, batch, plan, opts);
}

MixupSample mixup_with_lambda(const RowVector& x1, const RowVector& y1, const RowVector& x2, const RowVector& y2,
                              double lambda) {
  if (x1.size() != x2.size() || y1.size() != y2.size()) throw DimensionError("mixup operands differ in size");
  const double l = std::max(lambda, 1.0 - lambda);
  return MixupSample{l * x1 + (1.0 - l) * x2, l * y1 + (1.0 - l) * y2, l};
}

MixupSample mixup(const RowVector& x1, const RowVector& y1, const RowVector& x2, const RowVector& y2, double alpha,
                  double beta_shape, Rng& rng) {
  if (!(alpha > 0.0) || !(beta_shape > 0.0)) throw ConfigError("mixup Beta parameters must be > 0");
  return mixup_with_lambda(x1, y1, x2, y2, std::clamp(rng.beta(alpha, beta_shape), 0.0, 1.0));
}

}  // namespace iclssl
