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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclssl/tensor.hpp"

namespace iclssl {

/// `mnist_subset` is the real-MNIST 5000-image subset (4000 train / 1000
/// test) used when the full files are not available offline.
enum class DatasetName { mnist, mnist_subset, cifar10, cifar100, svhn, synthetic };
enum class Split { train, test };

std::string_view to_string(DatasetName name);
std::string_view to_string(Split split);
DatasetName parse_dataset_name(std::string_view text);
Split parse_split(std::string_view text);

struct DatasetInfo {
  ImageShape shape;
  int class_count;
  int train_count;
  int test_count;
};

/// Documented image shape, class count and split sizes.
const DatasetInfo& dataset_info(DatasetName name);

struct ImageDataset {
  DatasetName name = DatasetName::synthetic;
  Split split = Split::train;
  ImageShape shape;
  int class_count = 0;
  Matrix images;  // one flattened CHW image per row, values in [0,1]
  std::vector<int> labels;

  [[nodiscard]] int size() const { return static_cast<int>(labels.size()); }
  [[nodiscard]] ImageBatch batch(std::span<const int> indices) const;
  [[nodiscard]] ImageBatch all() const;
  /// First `count` rows (or all of them when count <= 0 or >= size()).
  [[nodiscard]] ImageDataset head(int count) const;
};

/// Throws DimensionError / CorruptionError if the dataset breaks its
/// invariants (row count vs labels, label range, pixel range).
void validate(const ImageDataset& ds);

struct LabelSplit {
  std::vector<int> labeled_indices;
  std::vector<int> unlabeled_indices;
  int labels_per_class = 0;
  std::uint64_t seed = 0;
};

/// Cache root: $ICLSSL_CACHE_DIR if set, otherwise ./data.
std::filesystem::path default_cache_dir();

/// Loads `<cache_dir>/<name>/<split>.bin`, importing from
/// `<cache_dir>/<name>/raw/` on first use. The synthetic fixture is generated
/// instead of imported. Throws IoError when neither cache nor raw files
/// exist, CorruptionError on checksum or cardinality mismatch.
ImageDataset load_dataset(DatasetName name, Split split, const std::filesystem::path& cache_dir);

/// Two-moons point cloud rendered as 1x8x8 blobs, 2 classes. Deterministic.
ImageDataset make_synthetic(Split split, int count);

/// Binary cache I/O (`<split>.bin` plus a `manifest.json` holding count,
/// class count and SHA-256 per split).
void write_cache(const ImageDataset& ds, const std::filesystem::path& cache_dir);
ImageDataset read_cache(DatasetName name, Split split, const std::filesystem::path& cache_dir);

/// Class-balanced split: exactly `labels_per_class` labeled indices per class
/// drawn by seeded sampling without replacement, everything else unlabeled.
/// Both lists are sorted ascending.
LabelSplit split_labels(const ImageDataset& ds, int labels_per_class, std::uint64_t seed);

}  // namespace iclssl
