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

#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iclssl/errors.hpp"
#include "iclssl/eval.hpp"
#include "iclssl/hashing.hpp"
#include "iclssl/trainer.hpp"
#include "oracles.hpp"

using namespace iclssl;
using namespace iclssl::testing;

namespace {

TrainConfig small_cfg(const std::filesystem::path& out) {
  TrainConfig c;
  c.name = "unit";
  c.dataset = DatasetName::synthetic;
  c.architecture = Architecture::mlp2;
  c.hidden = 16;
  c.embed_dim = 8;
  c.batch_size = 8;
  c.epochs = 1;
  c.labels_per_class = 4;
  c.unlabeled_limit = 160;
  c.learning_rate = 0.03;
  c.output_dir = out;
  c.cache_dir = out / "cache";
  c.seeds = {0};
  return c;
}

const RunData& synthetic_data() {
  static const RunData d{make_synthetic(Split::train, 2000), make_synthetic(Split::test, 1000)};
  return d;
}

struct MicroBatch {
  ImageBatch labeled;
  ImageBatch unlabeled;
};

MicroBatch micro_batch(int n = 8) {
  const auto& d = synthetic_data();
  std::vector<int> li, ui;
  for (int i = 0; i < n; ++i) {
    li.push_back(i);
    ui.push_back(100 + i);
  }
  MicroBatch m{d.train.batch(li), d.train.batch(ui)};
  m.unlabeled.labels.clear();
  return m;
}

std::vector<Matrix> snapshot(ModelBundle& m) {
  std::vector<Matrix> out;
  for (auto& np : m.named_params()) out.push_back(np.param->value);
  return out;
}

bool same_params(ModelBundle& m, const std::vector<Matrix>& s) {
  auto ps = m.named_params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!(ps[i].param->value.array() == s[i].array()).all()) return false;
  }
  return true;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Analytic parameter gradients of step_loss vs central differences on a
/// sample of coordinates per parameter.
void check_step_gradients(const TrainConfig& cfg, std::uint64_t seed) {
  const MicroBatch mb = micro_batch(6);
  TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
  Rng vr(seed);
  const StepBatches views = make_step_batches(mb.labeled, mb.unlabeled, cfg, vr);
  ModelBundle* teacher = st.teacher ? &*st.teacher : nullptr;
  if (teacher != nullptr) {
    // Move the teacher away from the student so the consistency term is non-trivial.
    Rng jitter(seed + 1);
    for (auto& np : teacher->named_params()) {
      if (np.param->trainable) np.param->value += random_matrix(jitter, static_cast<int>(np.param->value.rows()), static_cast<int>(np.param->value.cols()), 0.2);
    }
  }
  // Zero-initialised biases put ReLU inputs exactly on the kink over blank
  // pixels; a small jitter moves every unit off it.
  Rng nudge(seed + 2);
  for (auto& np : st.student.named_params()) {
    if (np.param->trainable) np.param->value += random_matrix(nudge, static_cast<int>(np.param->value.rows()), static_cast<int>(np.param->value.cols()), 0.01);
  }
  const Rng pair_seed(seed + 7);
  st.student.zero_grad();
  Rng pr = pair_seed;
  step_loss(st.student, teacher, views, cfg, pr, true);
  Rng pick(seed + 3);
  for (auto& np : st.student.named_params()) {
    Param& p = *np.param;
    if (!p.trainable) continue;
    const int k = static_cast<int>(std::min<Eigen::Index>(12, p.value.size()));
    Matrix analytic(1, k), numeric(1, k);
    for (int c = 0; c < k; ++c) {
      const Eigen::Index idx = pick.uniform_int(0, static_cast<int>(p.value.size() - 1));
      double& w = p.value.data()[idx];
      const double keep = w;
      auto eval = [&](double v) {
        w = v;
        Rng r = pair_seed;
        return step_loss(st.student, teacher, views, cfg, r, false).total;
      };
      // Small step: max-pool near-ties over mixed images sit within 1e-5.
      numeric(0, c) = (eval(keep + 1e-7) - eval(keep - 1e-7)) / 2e-7;
      w = keep;
      analytic(0, c) = p.grad.data()[idx];
    }
    EXPECT_LT(relative_error(analytic, numeric, 1e-7), 1e-4) << np.name << " method " << to_string(cfg.method);
  }
}

}  // namespace

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  const auto dir = scratch_dir("lr0");
  TrainConfig cfg = small_cfg(dir);
  const MicroBatch mb = micro_batch();
  TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
  const auto before = snapshot(st.student);
  const LossReport r = train_step(st, mb.labeled, mb.unlabeled, cfg, 0.0);
  EXPECT_TRUE(same_params(st.student, before));
  EXPECT_TRUE(std::isfinite(r.total));
  EXPECT_GT(r.L_x, 0.0);
  EXPECT_GT(r.L_c, 0.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(TrainStep, FullMaskAndNoContrastiveMatchesSupervised) {
  const auto dir = scratch_dir("fullmask");
  TrainConfig icl = small_cfg(dir);
  icl.loss_alpha = 0.0;
  icl.tau = 1.0;
  TrainConfig sup = icl;
  sup.method = Method::supervised;
  TrainConfig fm = icl;
  fm.method = Method::fixmatch_lite;
  const MicroBatch mb = micro_batch();
  const ModelSpec spec = model_spec_for(icl, mb.labeled.shape, 2);
  TrainState a = init_state(icl, spec), b = init_state(sup, spec), c = init_state(fm, spec);
  for (int s = 0; s < 5; ++s) {
    const LossReport ra = train_step(a, mb.labeled, mb.unlabeled, icl);
    train_step(b, mb.labeled, mb.unlabeled, sup);
    train_step(c, mb.labeled, mb.unlabeled, fm);
    EXPECT_EQ(ra.L_u, 0.0);
    EXPECT_EQ(ra.L_c, 0.0);
  }
  EXPECT_TRUE(same_params(a.student, snapshot(b.student)));
  EXPECT_TRUE(same_params(c.student, snapshot(b.student)));
}

TEST(TrainStep, SmallStepDescends) {
  const auto dir = scratch_dir("descent");
  for (Method method : {Method::supervised, Method::fixmatch_lite, Method::icl_ssl, Method::mean_teacher_lite}) {
    TrainConfig cfg = small_cfg(dir);
    cfg.method = method;
    cfg.augment = false;
    cfg.tau = 0.5;
    const MicroBatch mb = micro_batch();
    TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
    Rng vr(1);
    const StepBatches views = make_step_batches(mb.labeled, mb.unlabeled, cfg, vr);
    ModelBundle* teacher = st.teacher ? &*st.teacher : nullptr;
    const Rng pairs(5);
    Rng p0 = pairs;
    const double before = step_loss(st.student, teacher, views, cfg, p0, false).total;
    st.student.zero_grad();
    Rng p1 = pairs;
    step_loss(st.student, teacher, views, cfg, p1, true);
    st.optimizer.step(st.student, 1e-3);
    Rng p2 = pairs;
    const double after = step_loss(st.student, teacher, views, cfg, p2, false).total;
    EXPECT_LT(after, before) << to_string(method);
  }
}

TEST(TrainStep, ReportTotalIsWeightedSum) {
  const auto dir = scratch_dir("total");
  TrainConfig cfg = small_cfg(dir);
  cfg.loss_alpha = 0.7;
  cfg.tau = 0.5;
  const MicroBatch mb = micro_batch();
  TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
  for (int s = 0; s < 10; ++s) {
    const LossReport r = train_step(st, mb.labeled, mb.unlabeled, cfg);
    EXPECT_EQ(r.total, r.L_x + r.L_u + cfg.loss_alpha * r.L_c);
    EXPECT_GE(r.confident_fraction, 0.0);
    EXPECT_LE(r.confident_fraction, 1.0);
  }
}

TEST(TrainStep, DivergenceGuardAborts) {
  const auto dir = scratch_dir("diverge");
  TrainConfig cfg = small_cfg(dir);
  cfg.divergence_limit = 1e-3;
  const MicroBatch mb = micro_batch();
  TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
  const auto before = snapshot(st.student);
  try {
    train_step(st, mb.labeled, mb.unlabeled, cfg);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
  EXPECT_TRUE(same_params(st.student, before));
}

TEST(StepGradients, MatchFiniteDifferencesForEveryObjective) {
  const auto dir = scratch_dir("stepgrad");
  TrainConfig base = small_cfg(dir);
  base.hidden = 6;
  base.embed_dim = 4;
  base.tau = 0.5;
  base.loss_alpha = 0.8;
  std::uint64_t seed = 1;
  for (bool augment : {false, true}) {
    base.augment = augment;
    TrainConfig icl = base;
    check_step_gradients(icl, seed++);
    icl.negatives_source = NegativesSource::raw_z;
    check_step_gradients(icl, seed++);
    icl.negatives_source = NegativesSource::mix_z;
    icl.pair_mode = PairMode::all_pairs;
    check_step_gradients(icl, seed++);
    TrainConfig aug = base;
    aug.positive_source = PositiveSource::augmentation;
    check_step_gradients(aug, seed++);
    aug.negatives_source = NegativesSource::raw_z;
    check_step_gradients(aug, seed++);
    TrainConfig mt = base;
    mt.method = Method::mean_teacher_lite;
    mt.icl_attach = true;
    check_step_gradients(mt, seed++);
    TrainConfig sup = base;
    sup.method = Method::supervised;
    sup.icl_attach = true;
    check_step_gradients(sup, seed++);
  }
}

TEST(StepGradients, WideResNetAndSmallCnn) {
  const auto dir = scratch_dir("stepgrad_conv");
  TrainConfig cfg = small_cfg(dir);
  cfg.tau = 0.5;
  cfg.augment = false;
  for (Architecture arch : {Architecture::smallcnn, Architecture::linear}) {
    cfg.architecture = arch;
    check_step_gradients(cfg, 40);
  }
}

TEST(StepGradients, PseudoLabelsCarryNoGradient) {
  // With soft targets, a gradient through q_hat would differ from the
  // detached oracle below.
  const auto dir = scratch_dir("stopgrad");
  TrainConfig cfg = small_cfg(dir);
  cfg.augment = false;
  cfg.tau = 0.0;
  cfg.loss_alpha = 0.0;
  cfg.pseudo_target = PseudoTarget::soft;
  const MicroBatch mb = micro_batch(6);
  TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
  Rng vr(2);
  StepBatches views = make_step_batches(mb.labeled, mb.unlabeled, cfg, vr);
  views.strong = strong_augment(views.weak, vr);  // distinct views
  const PseudoLabelBatch frozen = pseudo_labels(st.student, views.weak, cfg.tau);
  auto detached = [&]() {
    const Matrix lx = classify(st.student, encode(st.student, views.labeled));
    const Matrix ls = classify(st.student, encode(st.student, views.strong));
    return supervised_loss(lx, one_hot(views.labeled.labels, 2)).value +
           unsupervised_loss(frozen, ls, PseudoTarget::soft).value;
  };
  auto attached = [&]() {
    Rng r(0);
    return step_loss(st.student, nullptr, views, cfg, r, false).total;
  };
  st.student.zero_grad();
  Rng r(0);
  step_loss(st.student, nullptr, views, cfg, r, true);
  double worst_detached = 0.0, max_gap = 0.0;
  for (auto& np : st.student.named_params()) {
    Param& p = *np.param;
    for (Eigen::Index idx = 0; idx < std::min<Eigen::Index>(10, p.value.size()); ++idx) {
      double& w = p.value.data()[idx];
      const double keep = w;
      w = keep + 1e-5;
      const double du = detached(), au = attached();
      w = keep - 1e-5;
      const double dd = detached(), ad = attached();
      w = keep;
      const double fd_detached = (du - dd) / 2e-5;
      const double fd_attached = (au - ad) / 2e-5;
      const double g = p.grad.data()[idx];
      worst_detached = std::max(worst_detached, std::abs(g - fd_detached) / std::max(std::abs(fd_detached), 1e-6));
      max_gap = std::max(max_gap, std::abs(fd_attached - fd_detached));
    }
  }
  EXPECT_LT(worst_detached, 1e-4);
  EXPECT_GT(max_gap, 1e-6);  // q_hat does move with the parameters
}

TEST(Ema, BoundaryDecaysAndGeometricConvergence) {
  const auto dir = scratch_dir("ema");
  TrainConfig cfg = small_cfg(dir);
  const ModelSpec spec = model_spec_for(cfg, {1, 8, 8}, 2);
  Rng r1(1), r2(2);
  ModelBundle student = ModelBundle::create(spec, r1);
  ModelBundle teacher = ModelBundle::create(spec, r2);
  const auto t0 = snapshot(teacher);
  ema_update(teacher, student, 1.0);
  EXPECT_TRUE(same_params(teacher, t0));
  ModelBundle copy = teacher;
  ema_update(copy, student, 0.0);
  EXPECT_TRUE(same_params(copy, snapshot(student)));

  auto distance = [&]() {
    double s = 0.0;
    auto tp = teacher.named_params();
    auto sp = student.named_params();
    for (std::size_t i = 0; i < tp.size(); ++i) s += (tp[i].param->value - sp[i].param->value).squaredNorm();
    return std::sqrt(s);
  };
  double d = distance();
  for (int k = 0; k < 20; ++k) {
    ema_update(teacher, student, 0.9);
    const double next = distance();
    EXPECT_NEAR(next / d, 0.9, 1e-9);
    d = next;
  }
  TrainConfig other = cfg;
  other.hidden = 32;
  Rng r3(3);
  ModelBundle wider = ModelBundle::create(model_spec_for(other, {1, 8, 8}, 2), r3);
  EXPECT_THROW(ema_update(wider, student, 0.5), DimensionError);
  EXPECT_THROW(ema_update(teacher, student, 1.5), ConfigError);
}

TEST(Train, SyntheticSmokeWritesArtifacts) {
  const auto dir = scratch_dir("smoke");
  TrainConfig cfg = small_cfg(dir);
  cfg.unlabeled_limit = 0;
  const auto start = std::chrono::steady_clock::now();
  const RunResult r = train(cfg, synthetic_data());
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.epochs[0].loss.total));
  EXPECT_GE(r.best_acc, 0.0);
  EXPECT_LE(r.best_acc, 100.0);
  const auto run = dir / "unit" / "0";
  EXPECT_EQ(r.run_dir, run);
  const std::string csv = read_file(run / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,L_x,L_u,L_c,total,confident_fraction,test_acc");
  EXPECT_EQ(csv, metrics_csv(r));

  std::ifstream in(run / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("content_hash"), git_blob_hash(j.at("config_text").get<std::string>()));
  EXPECT_EQ(j.at("seed"), 0);
  // The echoed config alone reproduces the run config.
  EXPECT_EQ(to_config_text(resolve_config(parse_config_text(j.at("config_text").get<std::string>()))), r.config_text);

  Checkpoint ck = load_checkpoint(run / "best.ckpt");
  EXPECT_EQ(evaluate(ck.model, synthetic_data().test), r.best_acc);
  EXPECT_EQ(ck.config_text, r.config_text);
}

TEST(Train, DeterministicAndPrefetchInvariant) {
  const auto dir = scratch_dir("determinism");
  TrainConfig cfg = small_cfg(dir);
  cfg.epochs = 2;
  TrainOptions quiet;
  quiet.write_outputs = false;
  const std::string a = metrics_csv(train(cfg, synthetic_data(), quiet));
  const std::string b = metrics_csv(train(cfg, synthetic_data(), quiet));
  EXPECT_EQ(a, b);
  cfg.prefetch = true;
  EXPECT_EQ(metrics_csv(train(cfg, synthetic_data(), quiet)), a);
  cfg.prefetch = false;
  cfg.seed = 1;
  EXPECT_NE(metrics_csv(train(cfg, synthetic_data(), quiet)), a);
}

TEST(Train, EpochCountAndCosineSchedule) {
  const auto dir = scratch_dir("epochs");
  TrainConfig cfg = small_cfg(dir);
  cfg.epochs = 3;
  cfg.lr_schedule = LrSchedule::cosine;
  TrainOptions quiet;
  quiet.write_outputs = false;
  const RunResult r = train(cfg, synthetic_data(), quiet);
  ASSERT_EQ(r.epochs.size(), 3u);
  for (int e = 0; e < 3; ++e) EXPECT_EQ(r.epochs[static_cast<std::size_t>(e)].epoch, e + 1);
  double best = 0.0;
  for (const auto& e : r.epochs) best = std::max(best, e.test_acc);
  EXPECT_EQ(r.best_acc, best);
  EXPECT_EQ(r.final_acc, r.epochs.back().test_acc);
}

TEST(Baselines, SupervisedReportsNoUnlabeledTerms) {
  const auto dir = scratch_dir("supervised");
  TrainConfig cfg = small_cfg(dir);
  cfg.method = Method::supervised;
  cfg.epochs = 2;
  TrainOptions quiet;
  quiet.write_outputs = false;
  for (const auto& e : run_baseline(cfg, synthetic_data(), quiet).epochs) {
    EXPECT_EQ(e.loss.L_u, 0.0);
    EXPECT_EQ(e.loss.L_c, 0.0);
    EXPECT_EQ(e.loss.total, e.loss.L_x);
  }
}

TEST(Baselines, MeanTeacherConsistencyZeroAtInit) {
  const auto dir = scratch_dir("mt");
  TrainConfig cfg = small_cfg(dir);
  cfg.method = Method::mean_teacher_lite;
  cfg.augment = false;
  const MicroBatch mb = micro_batch();
  TrainState st = init_state(cfg, model_spec_for(cfg, mb.labeled.shape, 2));
  ASSERT_TRUE(st.teacher.has_value());
  Rng vr(1), pr(2);
  const StepBatches views = make_step_batches(mb.labeled, mb.unlabeled, cfg, vr);
  EXPECT_EQ(step_loss(st.student, &*st.teacher, views, cfg, pr, false).L_u, 0.0);
}

TEST(Baselines, RejectsNonBaselineMethods) {
  const auto dir = scratch_dir("reject");
  TrainConfig cfg = small_cfg(dir);
  EXPECT_THROW(run_baseline(cfg, synthetic_data()), ConfigError);
  EXPECT_THROW(attach_icl(Method::icl_ssl, cfg), ConfigError);
  EXPECT_THROW(parse_method("vat"), ConfigError);
}

TEST(AttachIcl, ZeroWeightReproducesBaseline) {
  const auto dir = scratch_dir("attach");
  TrainOptions quiet;
  quiet.write_outputs = false;
  for (Method m : {Method::supervised, Method::fixmatch_lite, Method::mean_teacher_lite}) {
    TrainConfig cfg = small_cfg(dir);
    cfg.method = m;
    cfg.loss_alpha = 0.0;
    const std::string bare = metrics_csv(run_baseline(cfg, synthetic_data(), quiet));
    const Trainer t = attach_icl(m, cfg);
    EXPECT_TRUE(t.config().icl_attach);
    EXPECT_EQ(metrics_csv(t.run(synthetic_data(), quiet)), bare) << to_string(m);
  }
}

TEST(AttachIcl, AddsContrastiveTerm) {
  const auto dir = scratch_dir("attach_lc");
  TrainConfig cfg = small_cfg(dir);
  cfg.method = Method::fixmatch_lite;
  TrainOptions quiet;
  quiet.write_outputs = false;
  const RunResult r = attach_icl(Method::fixmatch_lite, cfg).run(synthetic_data(), quiet);
  EXPECT_GT(r.epochs[0].loss.L_c, 0.0);
}
