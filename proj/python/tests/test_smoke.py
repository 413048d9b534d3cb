# Copyright 2026 The iclssl Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests for the Python bindings, checked against small numpy oracles."""

import math

import numpy as np
import pytest

import iclssl


def numpy_infonce(anchor, positive, temperature):
    sims = anchor @ positive.T / temperature
    sims -= sims.max(axis=1, keepdims=True)
    logp = sims - np.log(np.exp(sims).sum(axis=1, keepdims=True))
    return -np.mean(np.diag(logp))


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_config_round_trip():
    cfg = iclssl.resolve_config(overrides={"epochs": 3, "method": "fixmatch_lite", "seeds": [0, 1]})
    assert cfg["epochs"] == "3"
    assert cfg["method"] == "fixmatch_lite"
    assert cfg["seeds"] == "0,1"
    assert "loss_alpha" in iclssl.known_config_keys()
    assert "epochs = 3" in iclssl.config_text(cfg)


def test_bad_config_raises():
    with pytest.raises(iclssl.ConfigError):
        iclssl.resolve_config(overrides={"no_such_key": 1})
    with pytest.raises(ValueError):
        iclssl.resolve_config(overrides={"tau": 2.0})


def test_supervised_loss_matches_numpy():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, size=5)
    targets = np.eye(4)[labels]
    value, grad = iclssl.supervised_loss(logits, targets)
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    assert value == pytest.approx(-np.mean(np.log(p[np.arange(5), labels])), abs=1e-12)
    np.testing.assert_allclose(grad, (p - targets) / 5, atol=1e-12)


def test_contrastive_loss_matches_numpy():
    rng = np.random.default_rng(1)
    for n in (2, 8, 64):
        a, p = unit_rows(rng, n, 16), unit_rows(rng, n, 16)
        out = iclssl.contrastive_loss(a, p, 0.2)
        assert out["value"] == pytest.approx(numpy_infonce(a, p, 0.2), abs=1e-9)
        assert out["grad_anchor"].shape == (n, 16)


def test_contrastive_orthogonal_case():
    eye = np.eye(2)
    assert iclssl.contrastive_loss(eye, eye, 1.0)["value"] == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-12)


def test_unsupervised_loss_masks_and_monotone():
    rng = np.random.default_rng(2)
    weak, strong = 3 * rng.normal(size=(16, 10)), rng.normal(size=(16, 10))
    values = [iclssl.unsupervised_loss(weak, strong, tau)[0] for tau in np.linspace(0.1, 1.0, 10)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    q, hard, mask = iclssl.pseudo_labels(weak, 0.5)
    np.testing.assert_array_equal(hard, q.argmax(axis=1))
    np.testing.assert_array_equal(mask, q.max(axis=1) >= 0.5)


def test_pairs_and_lambdas():
    anchor, partner, lambdas = iclssl.plan_pairs(32, seed=3)
    assert anchor == list(range(32))
    assert sorted(partner) == list(range(32))
    assert all(i != j for i, j in zip(anchor, partner))
    lam = np.array(iclssl.sample_lambdas(0.5, 5000, seed=4))
    assert lam.min() >= 0.0 and lam.max() <= 1.0
    assert abs(lam.mean() - 0.5) < 0.03
    x, y, l = iclssl.mixup(np.ones(3), np.array([1.0, 0.0]), np.zeros(3), np.array([0.0, 1.0]), 0.2)
    assert l == pytest.approx(0.8)
    np.testing.assert_allclose(x, [0.8] * 3)
    a, b = np.arange(4.0), np.ones(4)
    np.testing.assert_allclose(iclssl.interpolate(a, b, 0.25), 0.25 * a + 0.75 * b)


def test_total_loss():
    assert iclssl.total_loss(1.0, 2.0, 4.0, 0.5) == 5.0


def test_train_synthetic_and_checkpoint(tmp_path):
    cfg = iclssl.resolve_config(overrides={
        "dataset": "synthetic", "architecture": "mlp2", "labels_per_class": 4, "epochs": 2,
        "batch_size": 16, "hidden": 16, "embed_dim": 8, "unlabeled_limit": 160,
        "output_dir": str(tmp_path), "cache_dir": str(tmp_path / "cache"), "name": "smoke", "seed": 5,
    })
    run = iclssl.train(cfg)
    assert len(run["epochs"]) == 2
    assert 0.0 <= run["best_acc"] <= 100.0
    for e in run["epochs"]:
        # Epoch means of the terms, so equal up to rounding.
        assert math.isclose(e["total"], e["L_x"] + e["L_u"] + 0.5 * e["L_c"], rel_tol=1e-12)
    ckpt = tmp_path / "smoke" / "5" / "best.ckpt"
    assert ckpt.exists()
    assert iclssl.evaluate_checkpoint(ckpt) == pytest.approx(run["best_acc"], abs=1e-9)
    again = iclssl.train(cfg, write_outputs=False)
    assert [e["test_acc"] for e in again["epochs"]] == [e["test_acc"] for e in run["epochs"]]
