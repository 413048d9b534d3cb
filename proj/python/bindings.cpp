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

// Python bindings for the main operations. Matrices cross as float64 numpy
// arrays; configs cross as {key: value} dicts in the config-file vocabulary.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>

#include "iclssl/config.hpp"
#include "iclssl/errors.hpp"
#include "iclssl/eval.hpp"
#include "iclssl/interpolation.hpp"
#include "iclssl/losses.hpp"
#include "iclssl/trainer.hpp"

namespace py = pybind11;
using namespace iclssl;

namespace {

std::string as_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::string out;
    for (const auto& item : v) out += (out.empty() ? "" : ",") + as_text(item);
    return out;
  }
  if (py::isinstance<py::float_>(v)) return py::repr(v).cast<std::string>();
  return py::str(v).cast<std::string>();
}

TrainConfig to_config(const std::optional<std::filesystem::path>& file, const py::dict& overrides) {
  ConfigMap file_entries;
  if (file) file_entries = read_config_file(*file);
  ConfigMap extra;
  for (const auto& [k, v] : overrides) extra[py::str(k).cast<std::string>()] = as_text(v);
  return resolve_config(file_entries, extra);
}

py::dict config_dict(const TrainConfig& cfg) {
  py::dict d;
  for (const auto& [k, v] : to_config_map(cfg)) d[py::str(k)] = v;
  return d;
}

TrainConfig from_dict(const py::dict& cfg) { return to_config(std::nullopt, cfg); }

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["L_x"] = r.L_x;
  d["L_u"] = r.L_u;
  d["L_c"] = r.L_c;
  d["total"] = r.total;
  d["confident_fraction"] = r.confident_fraction;
  return d;
}

py::dict run_dict(const RunResult& r) {
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::dict d = report_dict(e.loss);
    d["epoch"] = e.epoch;
    d["test_acc"] = e.test_acc;
    epochs.append(d);
  }
  py::dict out;
  out["epochs"] = epochs;
  out["best_acc"] = r.best_acc;
  out["best_epoch"] = r.best_epoch;
  out["final_acc"] = r.final_acc;
  out["seed"] = r.seed;
  out["wall_seconds"] = r.wall_seconds;
  out["run_dir"] = r.run_dir.string();
  out["config_text"] = r.config_text;
  return out;
}

py::dict aggregate_dict(const SeedAggregate& a) {
  py::dict d;
  d["seeds"] = a.seeds;
  d["accuracies"] = a.accuracies;
  d["mean"] = a.mean;
  d["std"] = a.std;
  d["failures"] = a.failures.size();
  return d;
}

InterpolationPairBatch make_pairs(const Matrix& embed_mix, const Matrix& mix_z, const std::optional<Matrix>& z,
                                  const std::optional<std::vector<int>>& anchor_index) {
  InterpolationPairBatch p;
  p.embed_mix = embed_mix;
  p.mix_z = mix_z;
  p.z = z ? *z : mix_z;
  const int n = static_cast<int>(embed_mix.rows());
  if (anchor_index) {
    p.anchor_index = *anchor_index;
  } else {
    for (int i = 0; i < n; ++i) p.anchor_index.push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    p.partner_index.push_back(i);
    p.lambdas.push_back(1.0);
  }
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Interpolation-consistency contrastive SSL: losses, pairing, training and evaluation.";

  // Most recently registered translators run first, so the base goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("resolve_config", [](std::optional<std::filesystem::path> path, py::dict overrides) {
        return config_dict(to_config(path, overrides));
      }, py::arg("path") = py::none(), py::arg("overrides") = py::dict(),
      "Defaults, then the config file, then overrides; returns the full validated config.");
  m.def("config_text", [](py::dict cfg) { return to_config_text(from_dict(cfg)); }, py::arg("config"));
  m.def("known_config_keys", &known_config_keys);

  // Losses.
  m.def("log_softmax", &log_softmax_rows, py::arg("logits"));
  m.def("supervised_loss", [](const Matrix& logits, const Matrix& targets) {
        const LossWithGrad r = supervised_loss(logits, targets);
        return py::make_tuple(r.value, r.grad);
      }, py::arg("logits"), py::arg("targets"), "Mean cross-entropy and its gradient w.r.t. logits.");
  m.def("pseudo_labels", [](const Matrix& weak_logits, double tau) {
        const PseudoLabelBatch pl = pseudo_labels_from_logits(weak_logits, tau);
        std::vector<bool> mask(pl.mask.begin(), pl.mask.end());
        return py::make_tuple(pl.q_hat, pl.hard_label, mask);
      }, py::arg("weak_logits"), py::arg("tau"), "Returns (q_hat, hard labels, confidence mask).");
  m.def("unsupervised_loss", [](const Matrix& weak_logits, const Matrix& strong_logits, double tau, const std::string& target) {
        const LossWithGrad r = unsupervised_loss(pseudo_labels_from_logits(weak_logits, tau), strong_logits,
                                                parse_pseudo_target(target));
        return py::make_tuple(r.value, r.grad);
      }, py::arg("weak_logits"), py::arg("strong_logits"), py::arg("tau"), py::arg("target") = "hard",
      "Masked pseudo-label cross-entropy; the gradient is w.r.t. the strong logits only.");
  m.def("contrastive_loss", [](const Matrix& embed_mix, const Matrix& mix_z, double temperature,
                               const std::string& negatives, std::optional<Matrix> z,
                               std::optional<std::vector<int>> anchor_index) {
        const ContrastiveResult r = contrastive_loss_with_grad(make_pairs(embed_mix, mix_z, z, anchor_index), temperature,
                                                               parse_negatives_source(negatives));
        py::dict d;
        d["value"] = r.value;
        d["grad_anchor"] = r.grad_anchor;
        d["grad_positive"] = r.grad_positive;
        d["grad_z"] = r.grad_z;
        return d;
      }, py::arg("embed_mix"), py::arg("mix_z"), py::arg("temperature"), py::arg("negatives") = "mix_z",
      py::arg("z") = py::none(), py::arg("anchor_index") = py::none(),
      "InfoNCE between anchors and positives. With negatives='raw_z', z and anchor_index are required.");
  m.def("consistency_mse", [](const Matrix& p1, const Matrix& p2) {
        const LossWithGrad r = consistency_mse(p1, p2);
        return py::make_tuple(r.value, r.grad);
      }, py::arg("p1"), py::arg("p2"));
  m.def("total_loss", [](double lx, double lu, double lc, double alpha) { return total_loss(lx, lu, lc, alpha).total; },
        py::arg("L_x"), py::arg("L_u"), py::arg("L_c"), py::arg("alpha"));

  // Interpolation.
  m.def("sample_lambdas", [](double beta_param, int count, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<double> out(static_cast<std::size_t>(count));
        for (double& l : out) l = sample_lambda(beta_param, rng);
        return out;
      }, py::arg("beta_param"), py::arg("count"), py::arg("seed") = 0);
  m.def("plan_pairs", [](int batch_size, const std::string& mode, double beta_param, std::uint64_t seed) {
        Rng rng(seed);
        const PairPlan p = plan_pairs(batch_size, parse_pair_mode(mode), beta_param, rng);
        return py::make_tuple(p.anchor_index, p.partner_index, p.lambdas);
      }, py::arg("batch_size"), py::arg("mode") = "derangement", py::arg("beta_param") = 0.5, py::arg("seed") = 0,
      "Returns (anchor_index, partner_index, lambdas).");
  m.def("interpolate", &interpolate_inputs, py::arg("a"), py::arg("b"), py::arg("lam"));
  m.def("mixup", [](const RowVector& x1, const RowVector& y1, const RowVector& x2, const RowVector& y2, double lam) {
        const MixupSample s = mixup_with_lambda(x1, y1, x2, y2, lam);
        return py::make_tuple(s.x, s.y, s.lambda);
      }, py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"), py::arg("lam"));

  // Training and evaluation.
  m.def("train", [](py::dict cfg, bool write_outputs) {
        const TrainConfig c = from_dict(cfg);
        RunResult r;
        {
          py::gil_scoped_release release;
          TrainOptions opts;
          opts.write_outputs = write_outputs;
          r = train(c, load_run_data(c), opts);
        }
        return run_dict(r);
      }, py::arg("config"), py::arg("write_outputs") = true, "Train one seed; returns per-epoch metrics and accuracies.");
  m.def("multi_seed", [](py::dict cfg) {
        const TrainConfig c = from_dict(cfg);
        SeedAggregate a;
        {
          py::gil_scoped_release release;
          a = multi_seed(c, c.seeds, load_run_data(c));
        }
        return aggregate_dict(a);
      }, py::arg("config"));
  m.def("evaluate_checkpoint", [](const std::filesystem::path& path, py::dict overrides) {
        Checkpoint ck = load_checkpoint(path);
        ConfigMap extra;
        for (const auto& [k, v] : overrides) extra[py::str(k).cast<std::string>()] = as_text(v);
        const TrainConfig c = resolve_config(parse_config_text(ck.config_text), extra);
        return evaluate(ck.model, load_run_data(c).test);
      }, py::arg("path"), py::arg("overrides") = py::dict(), "Test accuracy (percent) of a saved checkpoint.");
  m.def("drift_study", [](py::dict cfg) {
        const TrainConfig c = from_dict(cfg);
        DriftReport rep;
        {
          py::gil_scoped_release release;
          rep = run_drift_study(c, load_run_data(c));
        }
        py::dict out;
        for (const auto& row : rep.rows) {
          py::dict d;
          d["accuracy"] = row.accuracy;
          d["delta"] = row.delta;
          out[py::str(std::string(to_string(row.kind)))] = d;
        }
        return out;
      }, py::arg("config"));
}
