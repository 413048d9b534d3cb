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

#include "iclssl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numbers>

#include <json.hpp>

#include "iclssl/errors.hpp"
#include "iclssl/eval.hpp"
#include "iclssl/hashing.hpp"
#include "iclssl/interpolation.hpp"

namespace iclssl {
namespace fs = std::filesystem;

namespace {

bool needs_strong_view(const TrainConfig& cfg) {
  const bool pseudo = cfg.method == Method::icl_ssl || cfg.method == Method::fixmatch_lite;
  const bool aug_positives = cfg.uses_contrastive() && cfg.positive_source == PositiveSource::augmentation;
  return pseudo || aug_positives;
}

bool needs_unlabeled(const TrainConfig& cfg) {
  return cfg.method != Method::supervised || cfg.uses_contrastive();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Supervised cross-entropy on the labeled view.
double labeled_term(ModelBundle& m, const ImageBatch& labeled, bool accumulate) {
  LayerTrace te, tc;
  const Matrix feats = m.encoder.forward(labeled.pixels, Mode::train, accumulate ? &te : nullptr);
  const Matrix logits = m.classifier.forward(feats, Mode::train, accumulate ? &tc : nullptr);
  const LossWithGrad sup = supervised_loss(logits, one_hot(labeled.labels, m.spec().classes));
  if (accumulate) m.encoder.backward(m.classifier.backward(sup.grad, tc), te);
  return sup.value;
}

/// Masked pseudo-label cross-entropy: targets from the weak view carry no
/// gradient, predictions on the strong view do.
double pseudo_label_term(ModelBundle& m, const StepBatches& views, const TrainConfig& cfg, bool accumulate,
                         double& confident_fraction) {
  const PseudoLabelBatch pl = pseudo_labels(m, views.weak, cfg.tau, Mode::train);
  confident_fraction = pl.confident_fraction();
  LayerTrace te, tc;
  const Matrix feats = m.encoder.forward(views.strong.pixels, Mode::train, accumulate ? &te : nullptr);
  const Matrix logits = m.classifier.forward(feats, Mode::train, accumulate ? &tc : nullptr);
  const LossWithGrad uns = unsupervised_loss(pl, logits, cfg.pseudo_target);
  if (accumulate) m.encoder.backward(m.classifier.backward(uns.grad, tc), te);
  return uns.value;
}

double consistency_term(ModelBundle& student, ModelBundle& teacher, const StepBatches& views,
                        const TrainConfig& cfg, bool accumulate) {
  LayerTrace te, tc;
  const Matrix feats = student.encoder.forward(views.weak.pixels, Mode::train, accumulate ? &te : nullptr);
  const Matrix probs = softmax_rows(student.classifier.forward(feats, Mode::train, accumulate ? &tc : nullptr));
  ImageBatch teacher_in = views.teacher_view;
  const Matrix target = softmax_rows(classify(teacher, encode(teacher, teacher_in)));
  const LossWithGrad mse = consistency_mse(probs, target);
  if (accumulate) {
    const Matrix dlogits = softmax_backward(probs, mse.grad * cfg.consistency_weight);
    student.encoder.backward(student.classifier.backward(dlogits, tc), te);
  }
  return cfg.consistency_weight * mse.value;
}

double interpolation_contrastive_term(ModelBundle& m, const StepBatches& views, const TrainConfig& cfg,
                                      Rng& pair_rng, bool accumulate) {
  const PairPlan plan = plan_pairs(views.weak.size(), cfg.pair_mode, cfg.beta_param, pair_rng);
  const PairForward fwd = forward_positive_pairs(m, views.weak, plan, Mode::train);
  const ContrastiveResult con = contrastive_loss_with_grad(fwd.pairs, cfg.temperature, cfg.negatives_source);
  if (accumulate) {
    const double a = cfg.loss_alpha;
    const Matrix gz = a * con.grad_z;
    backward_positive_pairs(m, fwd, a * con.grad_anchor, a * con.grad_positive,
                            cfg.negatives_source == NegativesSource::raw_z ? &gz : nullptr);
  }
  return con.value;
}

/// Ablation: anchor F(weak u_i), positive F(strong u_i), no interpolation.
double augmentation_contrastive_term(ModelBundle& m, const StepBatches& views, const TrainConfig& cfg,
                                     bool accumulate) {
  LayerTrace ew, pw, es, ps;
  const Matrix raw_w =
      m.projector.forward(m.encoder.forward(views.weak.pixels, Mode::train, &ew), Mode::train, &pw);
  const Matrix raw_s =
      m.projector.forward(m.encoder.forward(views.strong.pixels, Mode::train, &es), Mode::train, &ps);
  InterpolationPairBatch pairs;
  pairs.embed_mix = normalize_rows(raw_w);
  pairs.mix_z = normalize_rows(raw_s);
  pairs.z = pairs.embed_mix;
  for (int i = 0; i < views.weak.size(); ++i) {
    pairs.anchor_index.push_back(i);
    pairs.partner_index.push_back(i);
    pairs.lambdas.push_back(1.0);
  }
  const ContrastiveResult con = contrastive_loss_with_grad(pairs, cfg.temperature, cfg.negatives_source);
  if (accumulate) {
    const double a = cfg.loss_alpha;
    Matrix gw = a * con.grad_anchor;
    if (cfg.negatives_source == NegativesSource::raw_z) gw += a * con.grad_z;
    const Matrix gs = a * con.grad_positive;
    m.encoder.backward(m.projector.backward(normalize_rows_backward(raw_w, pairs.embed_mix, gw), pw), ew);
    m.encoder.backward(m.projector.backward(normalize_rows_backward(raw_s, pairs.mix_z, gs), ps), es);
  }
  return con.value;
}

double schedule_lr(const TrainConfig& cfg, std::uint64_t step, std::uint64_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::constant || total_steps == 0) return cfg.learning_rate;
  // Cosine decay as used by FixMatch: lr * cos(7 pi k / (16 K)).
  return cfg.learning_rate * std::cos(7.0 * std::numbers::pi * static_cast<double>(step) /
                                      (16.0 * static_cast<double>(total_steps)));
}

LossReport apply_views(TrainState& state, const StepBatches& views, const TrainConfig& cfg, double lr) {
  Rng pair_rng = state.rng.fork(state.step).fork("pairs");
  state.student.zero_grad();
  ModelBundle* teacher = state.teacher ? &*state.teacher : nullptr;
  const LossReport report = step_loss(state.student, teacher, views, cfg, pair_rng, true);
  if (!std::isfinite(report.total) || report.total > cfg.divergence_limit) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "training diverged at step %llu: L_x=%g L_u=%g L_c=%g total=%g",
                  static_cast<unsigned long long>(state.step), report.L_x, report.L_u, report.L_c, report.total);
    throw NumericError(buf);
  }
  state.optimizer.step(state.student, lr);
  if (state.teacher) ema_update(*state.teacher, state.student, cfg.ema_decay);
  ++state.step;
  return report;
}

StepBatches views_for_step(const TrainState& state, std::uint64_t step, const ImageBatch& labeled,
                           const ImageBatch& unlabeled, const TrainConfig& cfg) {
  Rng rng = state.rng.fork(step).fork("views");
  return make_step_batches(labeled, unlabeled, cfg, rng);
}

/// Endless labeled stream: reshuffled each time the labeled set is exhausted.
class LabeledCycler {
 public:
  LabeledCycler(std::vector<int> indices, Rng rng) : indices_(std::move(indices)), rng_(rng) { reshuffle(); }

  std::vector<int> next(int count) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    while (static_cast<int>(out.size()) < count) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_ = indices_;
    rng_.fork(cycle_++).shuffle(order_);
    cursor_ = 0;
  }

  std::vector<int> indices_;
  std::vector<int> order_;
  Rng rng_;
  std::uint64_t cycle_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace

void SgdMomentum::step(ModelBundle& model, double learning_rate) {
  auto params = model.named_params();
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& np : params) velocity_.push_back(Matrix::Zero(np.param->value.rows(), np.param->value.cols()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i].param;
    if (!p.trainable) continue;
    Matrix& v = velocity_[i];
    if (weight_decay_ > 0.0) {
      v = momentum_ * v + p.grad + weight_decay_ * p.value;
    } else {
      v = momentum_ * v + p.grad;
    }
    p.value -= learning_rate * v;
  }
}

ModelSpec model_spec_for(const TrainConfig& cfg, const ImageShape& input, int classes) {
  ModelSpec s;
  s.arch = cfg.architecture;
  s.input = input;
  s.classes = classes;
  s.embed_dim = cfg.embed_dim;
  s.hidden = cfg.hidden;
  return s;
}

TrainState init_state(const TrainConfig& cfg, const ModelSpec& spec) {
  Rng init = Rng(cfg.seed).fork("init");
  TrainState st{ModelBundle::create(spec, init), std::nullopt, SgdMomentum(cfg.momentum, cfg.weight_decay),
                Rng(cfg.seed).fork("steps"), 0};
  if (cfg.method == Method::mean_teacher_lite) st.teacher = st.student;
  return st;
}

WeakAugmentConfig weak_config(const TrainConfig& cfg) { return {cfg.weak_hflip_prob, cfg.weak_pad}; }

StrongAugmentConfig strong_config(const TrainConfig& cfg) {
  return {cfg.strong_num_ops, cfg.strong_magnitude, 0.0};
}

StepBatches make_step_batches(const ImageBatch& labeled, const ImageBatch& unlabeled, const TrainConfig& cfg,
                              Rng& rng) {
  StepBatches v;
  if (!cfg.augment) {
    v.labeled = labeled;
    v.weak = unlabeled;
    if (needs_strong_view(cfg)) v.strong = unlabeled;
    if (cfg.method == Method::mean_teacher_lite) v.teacher_view = unlabeled;
    return v;
  }
  Rng lab_rng = rng.fork("labeled");
  Rng weak_rng = rng.fork("weak");
  Rng strong_rng = rng.fork("strong");
  Rng teacher_rng = rng.fork("teacher");
  v.labeled = weak_augment(labeled, lab_rng, weak_config(cfg));
  if (unlabeled.size() > 0) {
    v.weak = weak_augment(unlabeled, weak_rng, weak_config(cfg));
    if (needs_strong_view(cfg)) v.strong = strong_augment(unlabeled, strong_rng, strong_config(cfg));
    if (cfg.method == Method::mean_teacher_lite) v.teacher_view = weak_augment(unlabeled, teacher_rng, weak_config(cfg));
  }
  return v;
}

LossReport step_loss(ModelBundle& student, ModelBundle* teacher, const StepBatches& views, const TrainConfig& cfg,
                     Rng& pair_rng, bool accumulate) {
  if (!(views.labeled.shape == student.spec().input)) throw DimensionError("labeled batch does not match the model");
  const double lx = labeled_term(student, views.labeled, accumulate);
  double lu = 0.0;
  double lc = 0.0;
  double confident = 0.0;
  switch (cfg.method) {
    case Method::icl_ssl:
    case Method::fixmatch_lite: lu = pseudo_label_term(student, views, cfg, accumulate, confident); break;
    case Method::mean_teacher_lite:
      if (teacher == nullptr) throw ConfigError("mean_teacher_lite needs an EMA teacher");
      lu = consistency_term(student, *teacher, views, cfg, accumulate);
      break;
    case Method::supervised: break;
  }
  if (cfg.uses_contrastive() && cfg.loss_alpha > 0.0) {
    lc = cfg.positive_source == PositiveSource::interpolation
             ? interpolation_contrastive_term(student, views, cfg, pair_rng, accumulate)
             : augmentation_contrastive_term(student, views, cfg, accumulate);
  }
  return total_loss(lx, lu, lc, cfg.uses_contrastive() ? cfg.loss_alpha : 0.0, confident);
}

LossReport train_step(TrainState& state, const ImageBatch& labeled, const ImageBatch& unlabeled,
                      const TrainConfig& cfg, double learning_rate) {
  return apply_views(state, views_for_step(state, state.step, labeled, unlabeled, cfg), cfg, learning_rate);
}

LossReport train_step(TrainState& state, const ImageBatch& labeled, const ImageBatch& unlabeled,
                      const TrainConfig& cfg) {
  return train_step(state, labeled, unlabeled, cfg, cfg.learning_rate);
}

void ema_update(ModelBundle& teacher, ModelBundle& student, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("ema decay must lie in [0,1]");
  auto tp = teacher.named_params();
  auto sp = student.named_params();
  if (tp.size() != sp.size()) throw DimensionError("teacher and student have different parameter counts");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    require_same_shape(tp[i].param->value, sp[i].param->value, "ema update");
    tp[i].param->value = decay * tp[i].param->value + (1.0 - decay) * sp[i].param->value;
  }
}

RunData load_run_data(const TrainConfig& cfg) {
  const fs::path cache = cfg.resolved_cache_dir();
  RunData d{load_dataset(cfg.dataset, Split::train, cache), load_dataset(cfg.dataset, Split::test, cache)};
  d.test = d.test.head(cfg.test_limit);
  return d;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string metrics_csv(const RunResult& result) {
  std::string out = "epoch,L_x,L_u,L_c,total,confident_fraction,test_acc\n";
  for (const auto& e : result.epochs) {
    out += std::to_string(e.epoch) + "," + format_metric(e.loss.L_x) + "," + format_metric(e.loss.L_u) + "," +
           format_metric(e.loss.L_c) + "," + format_metric(e.loss.total) + "," +
           format_metric(e.loss.confident_fraction) + "," + format_metric(e.test_acc) + "\n";
  }
  return out;
}

RunResult train(const TrainConfig& cfg_in, const RunData& data, const TrainOptions& opts) {
  cfg_in.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainConfig cfg = cfg_in;
  RunResult result;
  result.seed = cfg.seed;
  result.config_text = to_config_text(cfg);

  const LabelSplit split = split_labels(data.train, cfg.labels_per_class, cfg.seed);
  std::vector<int> pool = split.unlabeled_indices;
  if (cfg.unlabeled_limit > 0 && static_cast<int>(pool.size()) > cfg.unlabeled_limit) {
    Rng(cfg.seed).fork("unlabeled_pool").shuffle(pool);
    pool.resize(static_cast<std::size_t>(cfg.unlabeled_limit));
    std::sort(pool.begin(), pool.end());
  }
  const int unlabeled_batch = cfg.mu * cfg.batch_size;
  const bool use_unlabeled = needs_unlabeled(cfg);
  if (use_unlabeled && static_cast<int>(pool.size()) < std::max(2, unlabeled_batch)) {
    throw ConfigError("unlabeled pool of " + std::to_string(pool.size()) + " is smaller than one batch");
  }
  const int steps_per_epoch = std::max(1, static_cast<int>(pool.size()) / unlabeled_batch);
  const auto total_steps = static_cast<std::uint64_t>(steps_per_epoch) * static_cast<std::uint64_t>(cfg.epochs);

  TrainState state = init_state(cfg, model_spec_for(cfg, data.train.shape, data.train.class_count));
  LabeledCycler labeled(split.labeled_indices, Rng(cfg.seed).fork("labeled_order"));

  fs::path run_dir;
  if (opts.write_outputs) {
    run_dir = cfg.output_dir / cfg.name / std::to_string(cfg.seed);
    fs::create_directories(run_dir);
    result.run_dir = run_dir;
  }

  // Index lists for every step are fixed up front so prefetching the next
  // step's views cannot change what any step sees.
  struct StepInput {
    ImageBatch labeled;
    ImageBatch unlabeled;
  };
  auto gather = [&](const std::vector<int>& perm, int s) {
    StepInput in;
    in.labeled = data.train.batch(labeled.next(cfg.batch_size));
    if (use_unlabeled) {
      std::vector<int> idx(perm.begin() + s * unlabeled_batch, perm.begin() + (s + 1) * unlabeled_batch);
      in.unlabeled = data.train.batch(idx);
      in.unlabeled.labels.clear();
    } else {
      in.unlabeled.shape = data.train.shape;
      in.unlabeled.pixels.resize(0, data.train.shape.size());
    }
    return in;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> perm = pool;
    Rng(cfg.seed).fork("epoch").fork(static_cast<std::uint64_t>(epoch)).shuffle(perm);
    std::vector<StepInput> inputs;
    inputs.reserve(static_cast<std::size_t>(steps_per_epoch));
    for (int s = 0; s < steps_per_epoch; ++s) inputs.push_back(gather(perm, s));

    LossReport sum;
    std::future<StepBatches> pending;
    for (int s = 0; s < steps_per_epoch; ++s) {
      StepBatches views;
      const auto& in = inputs[static_cast<std::size_t>(s)];
      if (cfg.prefetch && pending.valid()) {
        views = pending.get();
      } else {
        views = views_for_step(state, state.step, in.labeled, in.unlabeled, cfg);
      }
      if (cfg.prefetch && s + 1 < steps_per_epoch) {
        const auto& nxt = inputs[static_cast<std::size_t>(s + 1)];
        pending = std::async(std::launch::async, [&state, &nxt, &cfg, step = state.step + 1] {
          return views_for_step(state, step, nxt.labeled, nxt.unlabeled, cfg);
        });
      }
      const LossReport r = apply_views(state, views, cfg, schedule_lr(cfg, state.step, total_steps));
      sum.L_x += r.L_x;
      sum.L_u += r.L_u;
      sum.L_c += r.L_c;
      sum.total += r.total;
      sum.confident_fraction += r.confident_fraction;
    }
    const double inv = 1.0 / steps_per_epoch;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = {sum.L_x * inv, sum.L_u * inv, sum.L_c * inv, sum.total * inv, sum.confident_fraction * inv};
    rec.test_acc = evaluate(state.student, data.test);
    result.epochs.push_back(rec);
    result.final_acc = rec.test_acc;
    if (epoch == 1 || rec.test_acc > result.best_acc) {
      result.best_acc = rec.test_acc;
      result.best_epoch = epoch;
      if (opts.write_outputs && cfg.save_checkpoint) {
        save_checkpoint(run_dir / "best.ckpt", state.student, result.config_text);
      }
    }
    if (opts.write_outputs) write_text_atomic(run_dir / "metrics.csv", metrics_csv(result));
  }

  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (opts.write_outputs) {
    nlohmann::ordered_json manifest;
    manifest["name"] = cfg.name;
    manifest["seed"] = cfg.seed;
    manifest["content_hash"] = git_blob_hash(result.config_text);
    manifest["config_text"] = result.config_text;
    nlohmann::ordered_json cfg_json;
    for (const auto& [k, v] : to_config_map(cfg)) cfg_json[k] = v;
    manifest["config"] = cfg_json;
    manifest["labeled_count"] = split.labeled_indices.size();
    manifest["unlabeled_count"] = pool.size();
    manifest["test_count"] = data.test.size();
    manifest["epochs_completed"] = result.epochs.size();
    manifest["best_test_acc"] = result.best_acc;
    manifest["best_epoch"] = result.best_epoch;
    manifest["final_test_acc"] = result.final_acc;
    manifest["wall_seconds"] = result.wall_seconds;
    write_text_atomic(run_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  if (opts.final_model != nullptr) *opts.final_model = state.student;
  return result;
}

RunResult train(const TrainConfig& cfg) { return train(cfg, load_run_data(cfg)); }

RunResult run_baseline(const TrainConfig& cfg, const RunData& data, const TrainOptions& opts) {
  if (cfg.method == Method::icl_ssl) {
    throw ConfigError("run_baseline expects supervised, fixmatch_lite or mean_teacher_lite");
  }
  return train(cfg, data, opts);
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

RunResult Trainer::run(const RunData& data, const TrainOptions& opts) const { return train(cfg_, data, opts); }

Trainer attach_icl(Method base_method, TrainConfig cfg) {
  if (base_method == Method::icl_ssl) {
    throw ConfigError("attach_icl expects a baseline method (supervised, fixmatch_lite, mean_teacher_lite)");
  }
  cfg.method = base_method;
  cfg.icl_attach = true;
  return Trainer(std::move(cfg));
}

}  // namespace iclssl
