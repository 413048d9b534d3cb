#!/usr/bin/env python3
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

"""Writes the 5000-image MNIST sample shipped with mlxtend as IDX files.

The sample has 500 images per digit. A seeded stratified split keeps 400 per
class for training and 100 for testing, written to
<cache>/mnist_subset/raw/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
"""

import argparse
import os
import struct
import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

TRAIN_PER_CLASS = 400
TEST_PER_CLASS = 100


def write_idx_images(path, images):
    n = images.shape[0]
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def split(labels, seed):
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        if idx.size < TRAIN_PER_CLASS + TEST_PER_CLASS:
            raise SystemExit(f"class {c} has only {idx.size} images")
        train.extend(idx[:TRAIN_PER_CLASS])
        test.extend(idx[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS])
    return np.sort(train), np.sort(test)


def main(argv=None):
    default_cache = os.environ.get("ICLSSL_CACHE_DIR", "data")
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cache-dir", default=default_cache)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--force", action="store_true", help="rewrite existing files")
    args = ap.parse_args(argv)

    raw = Path(args.cache_dir) / "mnist_subset" / "raw"
    names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
    if not args.force and all((raw / n).exists() for n in names):
        print(f"{raw}: already prepared")
        return 0

    x, y = mnist_data()
    x = np.rint(x).clip(0, 255)
    train, test = split(y, args.seed)
    raw.mkdir(parents=True, exist_ok=True)
    write_idx_images(raw / names[0], x[train])
    write_idx_labels(raw / names[1], y[train])
    write_idx_images(raw / names[2], x[test])
    write_idx_labels(raw / names[3], y[test])
    print(f"{raw}: {train.size} train / {test.size} test")
    return 0


if __name__ == "__main__":
    sys.exit(main())
