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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iclssl/augment.hpp"
#include "iclssl/config.hpp"
#include "iclssl/data.hpp"
#include "iclssl/losses.hpp"
#include "iclssl/model.hpp"
#include "iclssl/rng.hpp"

namespace iclssl {

/// SGD with classical momentum: v <- momentum * v + (g + wd * w); w <- w - lr * v.
/// Buffers (Param::trainable == false) are skipped.
class SgdMomentum {
 public:
  SgdMomentum() = default;
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(ModelBundle& model, double learning_rate);

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 0.0;
  std::vector<Matrix> velocity_;
};

/// Parameters and optimiser state owned by one trainer.
struct TrainState {
  ModelBundle student;
  std::optional<ModelBundle> teacher;  // mean_teacher_lite only
  SgdMomentum optimizer;
  Rng rng;
  std::uint64_t step = 0;
};

ModelSpec model_spec_for(const TrainConfig& cfg, const ImageShape& input, int classes);
TrainState init_state(const TrainConfig& cfg, const ModelSpec& spec);

/// The per-step views: augmented labeled batch, weak and strong views of
/// the unlabeled batch, and an independent weak view for the EMA teacher.
struct StepBatches {
  ImageBatch labeled;
  ImageBatch weak;
  ImageBatch strong;
  ImageBatch teacher_view;
};

WeakAugmentConfig weak_config(const TrainConfig& cfg);
StrongAugmentConfig strong_config(const TrainConfig& cfg);

/// With cfg.augment false every view is the raw batch.
StepBatches make_step_batches(const ImageBatch& labeled, const ImageBatch& unlabeled, const TrainConfig& cfg,
                              Rng& rng);

/// Loss of one step at the current parameters. With `accumulate` the
/// parameter gradients of the total loss are added into Param::grad
/// (caller zeroes them). `pair_rng` drives lambda and partner draws.
LossReport step_loss(ModelBundle& student, ModelBundle* teacher, const StepBatches& views, const TrainConfig& cfg,
                     Rng& pair_rng, bool accumulate);

/// One SGD update on the configured objective. Randomness for views and
/// pairs is forked from (state.rng, state.step), so the result depends only
/// on the state, the batches and the config. Throws NumericError when the
/// total is non-finite or exceeds cfg.divergence_limit.
LossReport train_step(TrainState& state, const ImageBatch& labeled, const ImageBatch& unlabeled,
                      const TrainConfig& cfg, double learning_rate);
LossReport train_step(TrainState& state, const ImageBatch& labeled, const ImageBatch& unlabeled,
                      const TrainConfig& cfg);

/// teacher <- decay * teacher + (1 - decay) * student for every parameter
/// and buffer. DimensionError on mismatched architectures.
void ema_update(ModelBundle& teacher, ModelBundle& student, double decay);

struct RunData {
  ImageDataset train;
  ImageDataset test;
};

/// Loads both splits from the cache and applies cfg.test_limit.
RunData load_run_data(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  LossReport loss;  // mean over the epoch's steps
  double test_acc = 0.0;
};

struct RunResult {
  std::vector<EpochRecord> epochs;
  double final_acc = 0.0;
  double best_acc = 0.0;
  int best_epoch = 0;
  std::string config_text;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::filesystem::path run_dir;  // empty when nothing was written

  [[nodiscard]] double reported_acc(ReportMetric metric) const {
    return metric == ReportMetric::best ? best_acc : final_acc;
  }
};

struct TrainOptions {
  /// Write metrics.csv, manifest.json and best.ckpt under
  /// <output_dir>/<name>/<seed>/.
  bool write_outputs = true;
  /// Receives the final student (e.g. for evaluation after the run).
  ModelBundle* final_model = nullptr;
};

/// Full run: label split, epochs of train_step over the unlabeled pool,
/// per-epoch test evaluation and best-checkpoint tracking.
RunResult train(const TrainConfig& cfg, const RunData& data, const TrainOptions& opts = {});
RunResult train(const TrainConfig& cfg);

/// metrics.csv body for a result (header included).
std::string metrics_csv(const RunResult& result);

/// ConfigError unless cfg.method is a baseline.
RunResult run_baseline(const TrainConfig& cfg, const RunData& data, const TrainOptions& opts = {});

/// A configured run; `attach_icl` produces the base method plus
/// loss_alpha * L_c ("B+O").
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  RunResult run(const RunData& data, const TrainOptions& opts = {}) const;

 private:
  TrainConfig cfg_;
};

Trainer attach_icl(Method base_method, TrainConfig cfg);

std::string format_metric(double v);

}  // namespace iclssl
