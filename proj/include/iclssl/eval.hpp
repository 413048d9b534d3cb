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
#include <string>
#include <utility>
#include <vector>

#include "iclssl/augment.hpp"
#include "iclssl/config.hpp"
#include "iclssl/data.hpp"
#include "iclssl/model.hpp"
#include "iclssl/trainer.hpp"

namespace iclssl {

/// Top-1 accuracy in percent, inference mode, no augmentation.
/// ConfigError on an empty test set, DimensionError on a shape mismatch.
double evaluate(ModelBundle& m, const ImageDataset& test);

/// Argmax class per row, evaluated in chunks.
std::vector<int> predict(ModelBundle& m, const ImageBatch& batch);

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string error;
};

struct SeedAggregate {
  std::vector<std::uint64_t> seeds;  // completed runs only
  std::vector<double> accuracies;    // percent, parallel to seeds
  double mean = 0.0;
  double std = 0.0;                  // sample (n - 1); 0 for a single run
  std::vector<SeedFailure> failures;

  [[nodiscard]] bool warning() const { return !failures.empty(); }
};

/// Mean and sample standard deviation of `accuracies`.
SeedAggregate aggregate(std::vector<std::uint64_t> seeds, std::vector<double> accuracies);

struct MultiSeedOptions {
  TrainOptions train;
  /// Receives each completed RunResult in seed order when non-null.
  std::vector<RunResult>* results = nullptr;
};

/// One train() per seed; failures are recorded and the aggregate covers the
/// completed runs. Error if no run completes or `seeds` is empty.
SeedAggregate multi_seed(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds, const RunData& data,
                         const MultiSeedOptions& opts = {});

struct TableRow {
  std::string variant;
  SeedAggregate result;
};

/// Rows: full, without_contrastive (loss_alpha = 0), without_interpolation
/// (augmentation-view positives), each over cfg.seeds.
std::vector<TableRow> run_ablation(const TrainConfig& cfg, const RunData& data, const MultiSeedOptions& opts = {});

/// Rows: the bare base method and base + loss_alpha * L_c, each over
/// cfg.seeds. cfg.method names the base.
std::vector<TableRow> run_transfer(const TrainConfig& cfg, const RunData& data, const MultiSeedOptions& opts = {});

struct DriftRow {
  AugmentKind kind = AugmentKind::none;
  std::vector<double> accuracies;  // per seed
  double accuracy = 0.0;           // mean over seeds
  double delta = 0.0;              // accuracy - none accuracy
};

struct DriftReport {
  std::vector<std::uint64_t> seeds;
  std::vector<DriftRow> rows;  // rows[0] is none

  [[nodiscard]] const DriftRow& row(AugmentKind kind) const;
};

/// Builds rows (means and deltas) from per-kind per-seed accuracies.
/// ConfigError unless a `none` entry is present.
DriftReport make_drift_report(std::vector<std::uint64_t> seeds,
                              const std::vector<std::pair<AugmentKind, std::vector<double>>>& per_kind);

/// Final test accuracy of one supervised probe trained on every training
/// image with `kind` applied to each input with probability
/// cfg.drift_probability. The same seed gives the same init and batch order
/// for every kind.
double drift_probe(const TrainConfig& cfg, const RunData& data, AugmentKind kind, std::uint64_t seed);

/// One probe per drift kind and seed in cfg.seeds. Requires mlp2 on an
/// MNIST-family dataset.
DriftReport run_drift_study(const TrainConfig& cfg, const RunData& data);

std::string format_table(const std::vector<TableRow>& rows);
std::string table_csv(const std::vector<TableRow>& rows);
std::string format_drift(const DriftReport& report);
std::string drift_csv(const DriftReport& report);
std::string aggregate_csv(const SeedAggregate& agg);

/// Aggregates the run manifests under <output_dir>/<name>/*/manifest.json
/// using the recorded best or final accuracy.
SeedAggregate collect_runs(const std::filesystem::path& output_dir, const std::string& name, ReportMetric metric);

struct CurveSeries {
  std::string label;
  std::vector<double> values;  // one per epoch
};

/// Accuracy-vs-epoch line chart as a standalone SVG document.
std::string accuracy_curves_svg(const std::vector<CurveSeries>& series, const std::string& title);

}  // namespace iclssl
