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

// iclssl command-line entry point: train / eval / ablate / drift /
// transfer / report over flat key=value config files.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iclssl/config.hpp"
#include "iclssl/errors.hpp"
#include "iclssl/eval.hpp"
#include "iclssl/model.hpp"
#include "iclssl/trainer.hpp"

namespace fs = std::filesystem;
using namespace iclssl;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args, bool required = true) {
  auto* opt = cmd->add_option("-c,--config", args.config_path, "config file (key = value lines)");
  if (required) opt->required();
  cmd->add_option("overrides", args.overrides, "key=value overrides");
}

TrainConfig load_config(const ConfigArgs& args) {
  const ConfigMap file = args.config_path.empty() ? ConfigMap{} : read_config_file(args.config_path);
  return resolve_config(file, parse_overrides(args.overrides));
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

int cmd_train(const ConfigArgs& args) {
  const TrainConfig cfg = load_config(args);
  const RunResult r = train(cfg, load_run_data(cfg));
  std::printf("%s seed %llu: best %.2f%% (epoch %d), final %.2f%%, %.1fs -> %s\n", cfg.name.c_str(),
              static_cast<unsigned long long>(cfg.seed), r.best_acc, r.best_epoch, r.final_acc, r.wall_seconds,
              r.run_dir.string().c_str());
  return 0;
}

int cmd_eval(const ConfigArgs& args, const std::string& checkpoint) {
  Checkpoint ck = load_checkpoint(checkpoint);
  // The run's own config, with the caller's file and overrides on top.
  ConfigMap entries = parse_config_text(ck.config_text);
  if (!args.config_path.empty()) {
    for (const auto& [k, v] : read_config_file(args.config_path)) entries[k] = v;
  }
  const TrainConfig cfg = resolve_config(entries, parse_overrides(args.overrides));
  ImageDataset test = load_dataset(cfg.dataset, Split::test, cfg.resolved_cache_dir()).head(cfg.test_limit);
  std::printf("%s: %.2f%% on %d %s test images\n", checkpoint.c_str(), evaluate(ck.model, test), test.size(),
              std::string(to_string(cfg.dataset)).c_str());
  return 0;
}

int cmd_ablate(const ConfigArgs& args) {
  const TrainConfig cfg = load_config(args);
  const auto rows = run_ablation(cfg, load_run_data(cfg));
  write_atomic(cfg.output_dir / cfg.name / "ablation.csv", table_csv(rows));
  std::cout << format_table(rows);
  return 0;
}

int cmd_transfer(const ConfigArgs& args) {
  const TrainConfig cfg = load_config(args);
  const auto rows = run_transfer(cfg, load_run_data(cfg));
  write_atomic(cfg.output_dir / cfg.name / "transfer.csv", table_csv(rows));
  std::cout << format_table(rows);
  return 0;
}

int cmd_drift(const ConfigArgs& args) {
  const TrainConfig cfg = load_config(args);
  const DriftReport rep = run_drift_study(cfg, load_run_data(cfg));
  write_atomic(cfg.output_dir / cfg.name / "drift.csv", drift_csv(rep));
  std::cout << format_drift(rep);
  return 0;
}

std::vector<double> read_test_acc(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> acc;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw CorruptionError("malformed row in " + csv.string());
    acc.push_back(std::stod(line.substr(comma + 1)));
  }
  return acc;
}

int cmd_report(const ConfigArgs& args, const std::vector<std::string>& names, const std::string& svg) {
  const TrainConfig cfg = load_config(args);
  std::vector<std::string> runs = names.empty() ? std::vector<std::string>{cfg.name} : names;
  std::vector<TableRow> rows;
  std::vector<CurveSeries> curves;
  for (const auto& name : runs) {
    rows.push_back({name, collect_runs(cfg.output_dir, name, cfg.report_metric)});
    const SeedAggregate& agg = rows.back().result;
    // Mean curve over the seeds that were aggregated.
    CurveSeries mean{name, {}};
    for (std::uint64_t seed : agg.seeds) {
      const auto acc = read_test_acc(cfg.output_dir / name / std::to_string(seed) / "metrics.csv");
      if (mean.values.size() < acc.size()) mean.values.resize(acc.size(), 0.0);
      for (std::size_t i = 0; i < acc.size(); ++i) mean.values[i] += acc[i] / static_cast<double>(agg.seeds.size());
    }
    curves.push_back(std::move(mean));
  }
  write_atomic(cfg.output_dir / cfg.name / "report.csv", table_csv(rows));
  if (!svg.empty()) write_atomic(svg, accuracy_curves_svg(curves, "test accuracy"));
  std::cout << format_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iclssl: interpolation-based contrastive semi-supervised training"};
  app.require_subcommand(1);

  ConfigArgs train_args, eval_args, ablate_args, drift_args, transfer_args, report_args;
  std::string checkpoint, svg;
  std::vector<std::string> report_names;

  add_config_args(app.add_subcommand("train", "train one run (seed from the config)"), train_args);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  add_config_args(eval, eval_args, false);
  add_config_args(app.add_subcommand("ablate", "full / without contrastive / without interpolation"), ablate_args);
  add_config_args(app.add_subcommand("drift", "augmentation drift study with supervised probes"), drift_args);
  add_config_args(app.add_subcommand("transfer", "baseline vs baseline + contrastive term"), transfer_args);
  auto* report = app.add_subcommand("report", "aggregate finished runs from their manifests");
  report->add_option("--runs", report_names, "run names (default: the config name)");
  report->add_option("--svg", svg, "write mean accuracy curves to this SVG file");
  add_config_args(report, report_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "train") return cmd_train(train_args);
    if (name == "eval") return cmd_eval(eval_args, checkpoint);
    if (name == "ablate") return cmd_ablate(ablate_args);
    if (name == "drift") return cmd_drift(drift_args);
    if (name == "transfer") return cmd_transfer(transfer_args);
    if (name == "report") return cmd_report(report_args, report_names, svg);
  } catch (const std::exception& e) {
    std::cerr << "iclssl: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
