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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclssl/data.hpp"
#include "iclssl/interpolation.hpp"
#include "iclssl/losses.hpp"
#include "iclssl/model.hpp"

namespace iclssl {

enum class Method { icl_ssl, supervised, fixmatch_lite, mean_teacher_lite };
std::string_view to_string(Method m);
Method parse_method(std::string_view text);

/// Which view pairs the contrastive term compares: interpolation positives
/// or, for the ablation, weak/strong augmentation views of one image.
enum class PositiveSource { interpolation, augmentation };
std::string_view to_string(PositiveSource s);
PositiveSource parse_positive_source(std::string_view text);

enum class LrSchedule { constant, cosine };
enum class ReportMetric { best, final };

struct TrainConfig {
  std::string name = "run";
  DatasetName dataset = DatasetName::mnist;
  Architecture architecture = Architecture::mlp2;
  int labels_per_class = 2;
  int unlabeled_limit = 0;  // 0: every unlabeled train image
  int test_limit = 0;       // 0: the full test split
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.0;
  LrSchedule lr_schedule = LrSchedule::constant;
  double loss_alpha = 0.5;
  double beta_param = 0.5;
  double tau = 0.95;
  double temperature = 0.2;
  int mu = 1;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  Method method = Method::icl_ssl;
  bool icl_attach = false;
  double ema_decay = 0.999;
  double consistency_weight = 1.0;
  PairMode pair_mode = PairMode::derangement;
  PseudoTarget pseudo_target = PseudoTarget::hard;
  NegativesSource negatives_source = NegativesSource::mix_z;
  PositiveSource positive_source = PositiveSource::interpolation;
  bool augment = true;
  double weak_hflip_prob = 0.5;
  int weak_pad = 4;
  int strong_num_ops = 2;
  double strong_magnitude = 1.0;
  int embed_dim = 64;
  int hidden = 256;
  double divergence_limit = 1e3;
  ReportMetric report_metric = ReportMetric::best;
  int drift_epochs = 20;
  double drift_probability = 0.5;
  double drift_rotate_degrees = 30.0;
  bool prefetch = false;
  bool save_checkpoint = true;
  std::filesystem::path cache_dir;   // empty: default_cache_dir()
  std::filesystem::path output_dir = "runs";
  std::filesystem::path checkpoint;  // eval only; empty: the run's best.ckpt

  /// ConfigError describing the first violated constraint.
  void validate() const;
  /// True when the step adds the contrastive term.
  [[nodiscard]] bool uses_contrastive() const { return method == Method::icl_ssl || icl_attach; }
  [[nodiscard]] std::filesystem::path resolved_cache_dir() const;
};

/// Flat `key = value` document with `#` comments. Later duplicates of a key
/// within one document override earlier ones.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(std::string_view text);
ConfigMap read_config_file(const std::filesystem::path& path);

/// `key=value` tokens from a command line. The same key given twice with
/// different values is a ConfigError; identical repeats are allowed.
ConfigMap parse_overrides(std::span<const std::string> tokens);

/// Applies `entries` on top of the documented defaults. Unknown keys and
/// unparseable values raise ConfigError; the result is validated.
TrainConfig resolve_config(const ConfigMap& entries);
TrainConfig resolve_config(const ConfigMap& file, const ConfigMap& overrides);

/// Canonical echo of every key, sorted, one `key = value` per line;
/// resolve_config(parse_config_text(to_config_text(c))) reproduces c.
std::string to_config_text(const TrainConfig& cfg);
ConfigMap to_config_map(const TrainConfig& cfg);

std::vector<std::string> known_config_keys();

}  // namespace iclssl
