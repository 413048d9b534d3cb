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

#include "iclssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "iclssl/errors.hpp"
#include "iclssl/losses.hpp"

namespace iclssl {
namespace fs = std::filesystem;

namespace {

constexpr int kEvalChunk = 500;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

SeedAggregate seeds_of(const TrainConfig& cfg, const RunData& data, const MultiSeedOptions& opts) {
  return multi_seed(cfg, cfg.seeds, data, opts);
}

}  // namespace

std::vector<int> predict(ModelBundle& m, const ImageBatch& batch) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(batch.size()));
  for (int start = 0; start < batch.size(); start += kEvalChunk) {
    const int n = std::min(kEvalChunk, batch.size() - start);
    ImageBatch chunk;
    chunk.shape = batch.shape;
    chunk.pixels = batch.pixels.middleRows(start, n);
    const Matrix logits = classify(m, encode(m, chunk));
    for (int r = 0; r < n; ++r) {
      Eigen::Index arg = 0;
      logits.row(r).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

double evaluate(ModelBundle& m, const ImageDataset& test) {
  if (test.size() == 0) throw ConfigError("cannot evaluate on an empty test set");
  const std::vector<int> pred = predict(m, test.all());
  int correct = 0;
  for (int i = 0; i < test.size(); ++i) correct += pred[static_cast<std::size_t>(i)] == test.labels[static_cast<std::size_t>(i)];
  return 100.0 * correct / test.size();
}

SeedAggregate aggregate(std::vector<std::uint64_t> seeds, std::vector<double> accuracies) {
  if (seeds.size() != accuracies.size()) throw DimensionError("seed and accuracy lists differ in length");
  if (accuracies.empty()) throw ConfigError("cannot aggregate zero runs");
  SeedAggregate agg;
  agg.seeds = std::move(seeds);
  agg.accuracies = std::move(accuracies);
  const double n = static_cast<double>(agg.accuracies.size());
  double sum = 0.0;
  for (double a : agg.accuracies) sum += a;
  agg.mean = sum / n;
  if (agg.accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : agg.accuracies) ss += (a - agg.mean) * (a - agg.mean);
    agg.std = std::sqrt(ss / (n - 1.0));
  }
  return agg;
}

SeedAggregate multi_seed(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds, const RunData& data,
                         const MultiSeedOptions& opts) {
  if (seeds.empty()) throw ConfigError("multi_seed needs at least one seed");
  std::vector<std::uint64_t> done;
  std::vector<double> accs;
  std::vector<SeedFailure> failures;
  for (std::uint64_t seed : seeds) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    try {
      RunResult r = train(run_cfg, data, opts.train);
      done.push_back(seed);
      accs.push_back(r.reported_acc(cfg.report_metric));
      if (opts.results != nullptr) opts.results->push_back(std::move(r));
    } catch (const Error& e) {
      std::cerr << "warning: " << cfg.name << " seed " << seed << " failed: " << e.what() << "\n";
      failures.push_back({seed, e.what()});
    }
  }
  if (done.empty()) throw Error("every run of " + cfg.name + " failed; first error: " + failures.front().error);
  SeedAggregate agg = aggregate(std::move(done), std::move(accs));
  agg.failures = std::move(failures);
  return agg;
}

std::vector<TableRow> run_ablation(const TrainConfig& cfg, const RunData& data, const MultiSeedOptions& opts) {
  if (cfg.method != Method::icl_ssl) throw ConfigError("run_ablation expects method = icl_ssl");
  TrainConfig full = cfg;
  full.name = cfg.name + "_full";
  TrainConfig no_lc = cfg;
  no_lc.name = cfg.name + "_without_contrastive";
  no_lc.loss_alpha = 0.0;
  TrainConfig no_interp = cfg;
  no_interp.name = cfg.name + "_without_interpolation";
  no_interp.positive_source = PositiveSource::augmentation;
  return {{"full", seeds_of(full, data, opts)},
          {"without_contrastive", seeds_of(no_lc, data, opts)},
          {"without_interpolation", seeds_of(no_interp, data, opts)}};
}

std::vector<TableRow> run_transfer(const TrainConfig& cfg, const RunData& data, const MultiSeedOptions& opts) {
  if (cfg.method == Method::icl_ssl) throw ConfigError("run_transfer expects a baseline method");
  TrainConfig base = cfg;
  base.icl_attach = false;
  base.name = cfg.name + "_" + std::string(to_string(cfg.method));
  TrainConfig with = attach_icl(cfg.method, cfg).config();
  with.name = base.name + "_icl";
  return {{std::string(to_string(cfg.method)), seeds_of(base, data, opts)},
          {std::string(to_string(cfg.method)) + "+icl", seeds_of(with, data, opts)}};
}

const DriftRow& DriftReport::row(AugmentKind kind) const {
  for (const auto& r : rows) {
    if (r.kind == kind) return r;
  }
  throw ConfigError("drift report has no " + std::string(to_string(kind)) + " row");
}

DriftReport make_drift_report(std::vector<std::uint64_t> seeds,
                              const std::vector<std::pair<AugmentKind, std::vector<double>>>& per_kind) {
  DriftReport rep;
  rep.seeds = std::move(seeds);
  auto none = std::find_if(per_kind.begin(), per_kind.end(), [](const auto& p) { return p.first == AugmentKind::none; });
  if (none == per_kind.end()) throw ConfigError("drift report needs a none row");
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) throw ConfigError("drift row without accuracies");
    double s = 0.0;
    for (double a : v) s += a;
    return s / static_cast<double>(v.size());
  };
  const double base = mean(none->second);
  rep.rows.push_back({AugmentKind::none, none->second, base, 0.0});
  for (const auto& [kind, accs] : per_kind) {
    if (kind == AugmentKind::none) continue;
    const double m = mean(accs);
    rep.rows.push_back({kind, accs, m, m - base});
  }
  return rep;
}

double drift_probe(const TrainConfig& cfg, const RunData& data, AugmentKind kind, std::uint64_t seed) {
  TrainConfig probe = cfg;
  probe.method = Method::supervised;
  probe.seed = seed;
  const ModelSpec spec = model_spec_for(probe, data.train.shape, data.train.class_count);
  Rng init = Rng(seed).fork("init");
  ModelBundle m = ModelBundle::create(spec, init);
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);
  DriftAugmentConfig dc;
  dc.probability = cfg.drift_probability;
  dc.rotate_degrees = cfg.drift_rotate_degrees;

  const int n = data.train.size();
  const int steps = std::max(1, n / cfg.batch_size);
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.drift_epochs; ++epoch) {
    const std::vector<int> perm = Rng(seed).fork("drift_epoch").fork(static_cast<std::uint64_t>(epoch)).permutation(n);
    for (int s = 0; s < steps; ++s, ++step) {
      const int lo = s * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      std::vector<int> idx(perm.begin() + lo, perm.begin() + hi);
      Rng aug = Rng(seed).fork("drift_augment").fork(step);
      const ImageBatch x = drift_augment(data.train.batch(idx), kind, aug, dc);
      m.zero_grad();
      LayerTrace te, tc;
      const Matrix logits = m.classifier.forward(m.encoder.forward(x.pixels, Mode::train, &te), Mode::train, &tc);
      const LossWithGrad loss = supervised_loss(logits, one_hot(x.labels, spec.classes));
      if (!std::isfinite(loss.value) || loss.value > cfg.divergence_limit) {
        throw NumericError("drift probe diverged: loss " + fmt("%g", loss.value));
      }
      m.encoder.backward(m.classifier.backward(loss.grad, tc), te);
      opt.step(m, cfg.learning_rate);
    }
  }
  return evaluate(m, data.test);
}

DriftReport run_drift_study(const TrainConfig& cfg, const RunData& data) {
  const bool mnist_family = cfg.dataset == DatasetName::mnist || cfg.dataset == DatasetName::mnist_subset;
  if (!mnist_family || cfg.architecture != Architecture::mlp2) {
    throw ConfigError("the drift study runs mlp2 probes on mnist or mnist_subset");
  }
  if (cfg.seeds.empty()) throw ConfigError("the drift study needs at least one seed");
  std::vector<std::pair<AugmentKind, std::vector<double>>> per_kind;
  for (AugmentKind kind : kDriftKinds) {
    std::vector<double> accs;
    for (std::uint64_t seed : cfg.seeds) accs.push_back(drift_probe(cfg, data, kind, seed));
    per_kind.emplace_back(kind, std::move(accs));
  }
  return make_drift_report(cfg.seeds, per_kind);
}

std::string format_table(const std::vector<TableRow>& rows) {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.variant.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s  %8s  %6s  %s\n", static_cast<int>(width), "variant", "mean", "std", "runs");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %8.2f  %6.2f  %zu%s\n", static_cast<int>(width), r.variant.c_str(),
                  r.result.mean, r.result.std, r.result.accuracies.size(), r.result.warning() ? " (failures)" : "");
    out << buf;
  }
  return out.str();
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::string out = "variant,mean,std,runs,failures\n";
  for (const auto& r : rows) {
    out += r.variant + "," + format_metric(r.result.mean) + "," + format_metric(r.result.std) + "," +
           std::to_string(r.result.accuracies.size()) + "," + std::to_string(r.result.failures.size()) + "\n";
  }
  return out;
}

std::string format_drift(const DriftReport& report) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-8s  %8s  %7s\n", "kind", "accuracy", "delta");
  out << buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-8s  %8.2f  %+7.2f\n", std::string(to_string(r.kind)).c_str(), r.accuracy,
                  r.delta);
    out << buf;
  }
  return out.str();
}

std::string drift_csv(const DriftReport& report) {
  std::string out = "kind,accuracy,delta";
  for (std::uint64_t s : report.seeds) out += ",seed_" + std::to_string(s);
  out += "\n";
  for (const auto& r : report.rows) {
    out += std::string(to_string(r.kind)) + "," + format_metric(r.accuracy) + "," + format_metric(r.delta);
    for (double a : r.accuracies) out += "," + format_metric(a);
    out += "\n";
  }
  return out;
}

std::string aggregate_csv(const SeedAggregate& agg) {
  std::string out = "seed,accuracy\n";
  for (std::size_t i = 0; i < agg.seeds.size(); ++i) {
    out += std::to_string(agg.seeds[i]) + "," + format_metric(agg.accuracies[i]) + "\n";
  }
  out += "mean," + format_metric(agg.mean) + "\nstd," + format_metric(agg.std) + "\n";
  return out;
}

SeedAggregate collect_runs(const fs::path& output_dir, const std::string& name, ReportMetric metric) {
  const fs::path root = output_dir / name;
  if (!fs::is_directory(root)) throw IoError("no runs under " + root.string());
  std::vector<std::pair<std::uint64_t, double>> found;
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path manifest = entry.path() / "manifest.json";
    if (!fs::is_regular_file(manifest)) continue;
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(manifest.string() + ": " + e.what());
    }
    const char* key = metric == ReportMetric::best ? "best_test_acc" : "final_test_acc";
    found.emplace_back(j.at("seed").get<std::uint64_t>(), j.at(key).get<double>());
  }
  if (found.empty()) throw IoError("no completed runs under " + root.string());
  std::sort(found.begin(), found.end());
  std::vector<std::uint64_t> seeds;
  std::vector<double> accs;
  for (const auto& [s, a] : found) {
    seeds.push_back(s);
    accs.push_back(a);
  }
  return aggregate(std::move(seeds), std::move(accs));
}

std::string accuracy_curves_svg(const std::vector<CurveSeries>& series, const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::size_t epochs = 1;
  double lo = 100.0, hi = 0.0;
  for (const auto& s : series) {
    epochs = std::max(epochs, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (lo > hi) lo = 0.0, hi = 100.0;
  lo = std::max(0.0, std::floor(lo / 10.0) * 10.0);
  hi = std::min(100.0, std::ceil(hi / 10.0) * 10.0);
  if (hi <= lo) hi = lo + 10.0;
  auto px = [&](std::size_t i) {
    return L + (epochs > 1 ? (W - L - R) * static_cast<double>(i) / static_cast<double>(epochs - 1) : 0.0);
  };
  auto py = [&](double v) { return T + (H - T - B) * (hi - v) / (hi - lo); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double v = lo; v <= hi + 1e-9; v += 10.0) {
    o << "<text x=\"" << L - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << v
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\" text-anchor=\"middle\">test accuracy (%)</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) o << px(i) << "," << py(series[k].values[i]) << " ";
    o << "\"/>\n";
    const double ly = T + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << series[k].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace iclssl
