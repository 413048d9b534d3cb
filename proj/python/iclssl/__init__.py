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

"""Interpolation-consistency contrastive semi-supervised learning.

Thin layer over the C++ core. Configs are plain dicts using the same keys as
the ``.cfg`` files; see ``known_config_keys()``.
"""

from iclssl._core import (
    ConfigError,
    DimensionError,
    Error,
    IoError,
    config_text,
    consistency_mse,
    contrastive_loss,
    drift_study,
    evaluate_checkpoint,
    interpolate,
    known_config_keys,
    log_softmax,
    mixup,
    multi_seed,
    plan_pairs,
    pseudo_labels,
    resolve_config,
    sample_lambdas,
    supervised_loss,
    total_loss,
    train,
    unsupervised_loss,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Error",
    "IoError",
    "config_text",
    "consistency_mse",
    "contrastive_loss",
    "drift_study",
    "evaluate_checkpoint",
    "interpolate",
    "known_config_keys",
    "log_softmax",
    "mixup",
    "multi_seed",
    "plan_pairs",
    "pseudo_labels",
    "resolve_config",
    "sample_lambdas",
    "supervised_loss",
    "total_loss",
    "train",
    "unsupervised_loss",
]
