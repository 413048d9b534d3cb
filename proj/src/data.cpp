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

#include "iclssl/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>
#include <optional>

#include <json.hpp>

#include "iclssl/errors.hpp"
#include "iclssl/hashing.hpp"
#include "iclssl/rng.hpp"

namespace iclssl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kCacheMagic[8] = {'I', 'C', 'L', 'S', 'S', 'L', 'D', 'S'};
constexpr std::uint32_t kCacheVersion = 1;

const DatasetInfo kMnist{{1, 28, 28}, 10, 60000, 10000};
const DatasetInfo kMnistSubset{{1, 28, 28}, 10, 4000, 1000};
const DatasetInfo kCifar10{{3, 32, 32}, 10, 50000, 10000};
const DatasetInfo kCifar100{{3, 32, 32}, 100, 50000, 10000};
const DatasetInfo kSvhn{{3, 32, 32}, 10, 73257, 26032};
const DatasetInfo kSynthetic{{1, 8, 8}, 2, 2000, 1000};

int expected_count(DatasetName name, Split split) {
  const auto& info = dataset_info(name);
  return split == Split::train ? info.train_count : info.test_count;
}

/// Whole-file read through zlib, which passes uncompressed files through
/// unchanged. Returns nullopt if the file does not exist.
std::optional<std::vector<std::uint8_t>> read_maybe_gz(const fs::path& plain) {
  fs::path path = plain;
  if (!fs::exists(path)) {
    path = plain;
    path += ".gz";
    if (!fs::exists(path)) return std::nullopt;
  }
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  int n = 0;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0) {
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw CorruptionError("decompression failed for " + path.string());
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw CorruptionError("truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

ImageDataset import_idx(DatasetName name, Split split, const fs::path& raw_dir) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  const fs::path images_path = raw_dir / (prefix + "-images-idx3-ubyte");
  const fs::path labels_path = raw_dir / (prefix + "-labels-idx1-ubyte");
  auto images = read_maybe_gz(images_path);
  auto labels = read_maybe_gz(labels_path);
  if (!images || !labels) {
    throw IoError("missing raw MNIST files: expected " + images_path.string() + "[.gz] and " +
                  labels_path.string() + "[.gz]");
  }
  if (read_be32(*images, 0) != 0x803 || read_be32(*labels, 0) != 0x801) {
    throw CorruptionError("bad IDX magic in " + raw_dir.string());
  }
  const std::uint32_t count = read_be32(*images, 4);
  const std::uint32_t rows = read_be32(*images, 8);
  const std::uint32_t cols = read_be32(*images, 12);
  if (read_be32(*labels, 4) != count) throw CorruptionError("IDX image/label count mismatch");
  if (rows != 28 || cols != 28) throw CorruptionError("unexpected MNIST image size");
  const std::size_t pixels = std::size_t{count} * rows * cols;
  if (images->size() < 16 + pixels || labels->size() < 8 + count) {
    throw CorruptionError("truncated IDX payload in " + raw_dir.string());
  }
  ImageDataset ds;
  ds.name = name;
  ds.split = split;
  ds.shape = {1, 28, 28};
  ds.class_count = 10;
  ds.images.resize(count, rows * cols);
  for (std::size_t i = 0; i < pixels; ++i) ds.images.data()[i] = (*images)[16 + i] / 255.0;
  ds.labels.assign(labels->begin() + 8, labels->begin() + 8 + count);
  return ds;
}

ImageDataset import_cifar(DatasetName name, Split split, const fs::path& raw_dir) {
  const bool fine = name == DatasetName::cifar100;
  std::vector<fs::path> files;
  if (fine) {
    files.push_back(raw_dir / (split == Split::train ? "train.bin" : "test.bin"));
  } else if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(raw_dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(raw_dir / "test_batch.bin");
  }
  const std::size_t label_bytes = fine ? 2 : 1;
  const std::size_t record = label_bytes + 3072;
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    auto bytes = read_maybe_gz(f);
    if (!bytes) throw IoError("missing raw CIFAR file " + f.string());
    all.insert(all.end(), bytes->begin(), bytes->end());
  }
  if (all.size() % record != 0) throw CorruptionError("CIFAR payload is not a whole number of records");
  const auto count = static_cast<Eigen::Index>(all.size() / record);
  ImageDataset ds;
  ds.name = name;
  ds.split = split;
  ds.shape = {3, 32, 32};
  ds.class_count = fine ? 100 : 10;
  ds.images.resize(count, 3072);
  ds.labels.resize(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    const std::uint8_t* rec = all.data() + static_cast<std::size_t>(i) * record;
    ds.labels[static_cast<std::size_t>(i)] = rec[label_bytes - 1];
    for (int p = 0; p < 3072; ++p) ds.images(i, p) = rec[label_bytes + p] / 255.0;
  }
  return ds;
}

void write_atomic(const fs::path& path, std::span<const char> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw CorruptionError("truncated cache blob");
  T value;
  std::memcpy(&value, in.data() + off, sizeof(T));
  off += sizeof(T);
  return value;
}

json read_manifest(const fs::path& path) {
  if (!fs::exists(path)) return json::object();
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw CorruptionError("unparseable manifest " + path.string() + ": " + e.what());
  }
}

fs::path dataset_dir(DatasetName name, const fs::path& cache_dir) {
  return cache_dir / std::string(to_string(name));
}

}  // namespace

std::string_view to_string(DatasetName name) {
  switch (name) {
    case DatasetName::mnist: return "mnist";
    case DatasetName::mnist_subset: return "mnist_subset";
    case DatasetName::cifar10: return "cifar10";
    case DatasetName::cifar100: return "cifar100";
    case DatasetName::svhn: return "svhn";
    case DatasetName::synthetic: return "synthetic";
  }
  return "?";
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

DatasetName parse_dataset_name(std::string_view text) {
  for (auto n : {DatasetName::mnist, DatasetName::mnist_subset, DatasetName::cifar10,
                 DatasetName::cifar100, DatasetName::svhn, DatasetName::synthetic}) {
    if (to_string(n) == text) return n;
  }
  throw ConfigError("unknown dataset '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "'");
}

const DatasetInfo& dataset_info(DatasetName name) {
  switch (name) {
    case DatasetName::mnist: return kMnist;
    case DatasetName::mnist_subset: return kMnistSubset;
    case DatasetName::cifar10: return kCifar10;
    case DatasetName::cifar100: return kCifar100;
    case DatasetName::svhn: return kSvhn;
    case DatasetName::synthetic: return kSynthetic;
  }
  throw ConfigError("unknown dataset");
}

ImageBatch ImageDataset::batch(std::span<const int> indices) const {
  ImageBatch out;
  out.shape = shape;
  out.pixels.resize(static_cast<Eigen::Index>(indices.size()), images.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int idx = indices[r];
    if (idx < 0 || idx >= size()) throw DimensionError("dataset index out of range");
    out.pixels.row(static_cast<Eigen::Index>(r)) = images.row(idx);
    out.labels.push_back(labels[static_cast<std::size_t>(idx)]);
  }
  return out;
}

ImageBatch ImageDataset::all() const { return ImageBatch{shape, images, labels}; }

ImageDataset ImageDataset::head(int count) const {
  if (count <= 0 || count >= size()) return *this;
  ImageDataset out = *this;
  out.images = images.topRows(count);
  out.labels.resize(static_cast<std::size_t>(count));
  return out;
}

void validate(const ImageDataset& ds) {
  if (ds.images.rows() != static_cast<Eigen::Index>(ds.labels.size())) {
    throw DimensionError("images and labels have different leading dimension");
  }
  if (ds.images.cols() != ds.shape.size()) throw DimensionError("image row size does not match shape");
  if (ds.class_count <= 0) throw DimensionError("class count must be positive");
  for (int label : ds.labels) {
    if (label < 0 || label >= ds.class_count) {
      throw CorruptionError("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(ds.class_count) + ")");
    }
  }
  if (ds.images.size() > 0 && (ds.images.minCoeff() < 0.0 || ds.images.maxCoeff() > 1.0)) {
    throw CorruptionError("pixel values outside [0,1]");
  }
}

fs::path default_cache_dir() {
  if (const char* env = std::getenv("ICLSSL_CACHE_DIR"); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  return fs::path("data");
}

ImageDataset make_synthetic(Split split, int count) {
  if (count < 2) throw ConfigError("synthetic fixture needs at least 2 samples");
  Rng rng = Rng(0x5e17).fork(to_string(split));
  ImageDataset ds;
  ds.name = DatasetName::synthetic;
  ds.split = split;
  ds.shape = kSynthetic.shape;
  ds.class_count = 2;
  ds.images.resize(count, ds.shape.size());
  ds.labels.resize(static_cast<std::size_t>(count));
  constexpr double kSigma = 0.9;
  for (int i = 0; i < count; ++i) {
    const int label = i % 2;
    const double t = rng.uniform(0.0, std::numbers::pi);
    // Standard two-moons parametrisation on roughly [-1, 2] x [-0.5, 1].
    double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x += rng.normal(0.0, 0.1);
    y += rng.normal(0.0, 0.1);
    const double cx = (x + 1.25) / 3.5 * 7.0;
    const double cy = 7.0 - (y + 0.75) / 2.0 * 7.0;
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
        const double v = std::exp(-d2 / (2.0 * kSigma * kSigma));
        // Quantised so the cache round trip is exact.
        ds.images(i, r * 8 + c) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
    ds.labels[static_cast<std::size_t>(i)] = label;
  }
  return ds;
}

void write_cache(const ImageDataset& ds, const fs::path& cache_dir) {
  validate(ds);
  const fs::path dir = dataset_dir(ds.name, cache_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create cache directory " + dir.string() + ": " + ec.message());

  std::vector<char> blob(kCacheMagic, kCacheMagic + sizeof(kCacheMagic));
  put<std::uint32_t>(blob, kCacheVersion);
  put<std::uint32_t>(blob, static_cast<std::uint32_t>(ds.shape.channels));
  put<std::uint32_t>(blob, static_cast<std::uint32_t>(ds.shape.height));
  put<std::uint32_t>(blob, static_cast<std::uint32_t>(ds.shape.width));
  put<std::uint32_t>(blob, static_cast<std::uint32_t>(ds.class_count));
  put<std::uint64_t>(blob, static_cast<std::uint64_t>(ds.size()));
  blob.reserve(blob.size() + static_cast<std::size_t>(ds.images.size()) + 2 * ds.labels.size());
  for (Eigen::Index i = 0; i < ds.images.size(); ++i) {
    blob.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(ds.images.data()[i] * 255.0))));
  }
  for (int label : ds.labels) put<std::uint16_t>(blob, static_cast<std::uint16_t>(label));

  const std::string split = std::string(to_string(ds.split));
  write_atomic(dir / (split + ".bin"), blob);

  json manifest = read_manifest(dir / "manifest.json");
  manifest["name"] = std::string(to_string(ds.name));
  manifest["class_count"] = ds.class_count;
  manifest["shape"] = {ds.shape.channels, ds.shape.height, ds.shape.width};
  manifest["splits"][split] = {
      {"count", ds.size()},
      {"checksum", "sha256:" + sha256_hex(std::span<const std::uint8_t>(
                                   reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()))}};
  const std::string text = manifest.dump(2) + "\n";
  write_atomic(dir / "manifest.json", text);
}

ImageDataset read_cache(DatasetName name, Split split, const fs::path& cache_dir) {
  const fs::path dir = dataset_dir(name, cache_dir);
  const std::string split_name = std::string(to_string(split));
  const fs::path blob_path = dir / (split_name + ".bin");
  if (!fs::exists(blob_path)) throw IoError("no cached split at " + blob_path.string());
  const json manifest = read_manifest(dir / "manifest.json");
  if (!manifest.contains("splits") || !manifest["splits"].contains(split_name)) {
    throw CorruptionError("manifest in " + dir.string() + " has no entry for split " + split_name);
  }
  const auto& entry = manifest["splits"][split_name];
  const auto blob = read_file(blob_path);
  const std::string checksum = "sha256:" + sha256_hex(blob);
  if (entry.value("checksum", std::string()) != checksum) {
    throw CorruptionError("checksum mismatch for " + blob_path.string());
  }
  if (blob.size() < sizeof(kCacheMagic) || std::memcmp(blob.data(), kCacheMagic, sizeof(kCacheMagic)) != 0) {
    throw CorruptionError("bad cache magic in " + blob_path.string());
  }
  std::size_t off = sizeof(kCacheMagic);
  if (get<std::uint32_t>(blob, off) != kCacheVersion) {
    throw CorruptionError("unsupported cache version in " + blob_path.string());
  }
  ImageDataset ds;
  ds.name = name;
  ds.split = split;
  ds.shape.channels = static_cast<int>(get<std::uint32_t>(blob, off));
  ds.shape.height = static_cast<int>(get<std::uint32_t>(blob, off));
  ds.shape.width = static_cast<int>(get<std::uint32_t>(blob, off));
  ds.class_count = static_cast<int>(get<std::uint32_t>(blob, off));
  const auto count = get<std::uint64_t>(blob, off);
  if (entry.value("count", -1) != static_cast<long long>(count)) {
    throw CorruptionError("manifest count disagrees with " + blob_path.string());
  }
  const std::size_t pixels = count * static_cast<std::size_t>(ds.shape.size());
  if (blob.size() != off + pixels + 2 * count) throw CorruptionError("cache blob has wrong size");
  ds.images.resize(static_cast<Eigen::Index>(count), ds.shape.size());
  for (std::size_t i = 0; i < pixels; ++i) ds.images.data()[i] = blob[off + i] / 255.0;
  off += pixels;
  ds.labels.resize(count);
  for (auto& label : ds.labels) label = get<std::uint16_t>(blob, off);
  validate(ds);
  return ds;
}

ImageDataset load_dataset(DatasetName name, Split split, const fs::path& cache_dir) {
  const fs::path blob = dataset_dir(name, cache_dir) / (std::string(to_string(split)) + ".bin");
  if (!fs::exists(blob)) {
    const fs::path raw = dataset_dir(name, cache_dir) / "raw";
    ImageDataset imported;
    switch (name) {
      case DatasetName::synthetic: imported = make_synthetic(split, expected_count(name, split)); break;
      case DatasetName::mnist:
      case DatasetName::mnist_subset: imported = import_idx(name, split, raw); break;
      case DatasetName::cifar10:
      case DatasetName::cifar100: imported = import_cifar(name, split, raw); break;
      case DatasetName::svhn:
        throw IoError("svhn must be supplied as a pre-built cache at " + blob.string());
    }
    if (imported.size() != expected_count(name, split)) {
      throw CorruptionError(std::string(to_string(name)) + "/" + std::string(to_string(split)) +
                            " has " + std::to_string(imported.size()) + " samples, expected " +
                            std::to_string(expected_count(name, split)));
    }
    write_cache(imported, cache_dir);
  }
  ImageDataset ds = read_cache(name, split, cache_dir);
  if (ds.size() != expected_count(name, split) || ds.class_count != dataset_info(name).class_count ||
      ds.shape != dataset_info(name).shape) {
    throw CorruptionError("cached " + std::string(to_string(name)) + " does not match its documented size");
  }
  return ds;
}

LabelSplit split_labels(const ImageDataset& ds, int labels_per_class, std::uint64_t seed) {
  if (labels_per_class < 1) throw ConfigError("labels_per_class must be >= 1");
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.class_count));
  for (int i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (int c = 0; c < ds.class_count; ++c) {
    const auto have = by_class[static_cast<std::size_t>(c)].size();
    if (have < static_cast<std::size_t>(labels_per_class)) {
      throw ConfigError("class " + std::to_string(c) + " has only " + std::to_string(have) +
                        " samples, fewer than labels_per_class=" + std::to_string(labels_per_class));
    }
  }
  Rng rng = Rng(seed).fork("label_split");
  LabelSplit out;
  out.labels_per_class = labels_per_class;
  out.seed = seed;
  std::vector<char> is_labeled(static_cast<std::size_t>(ds.size()), 0);
  for (auto& members : by_class) {
    // Partial Fisher-Yates: the first k slots are a uniform k-subset.
    for (int k = 0; k < labels_per_class; ++k) {
      const int j = rng.uniform_int(k, static_cast<int>(members.size()) - 1);
      std::swap(members[static_cast<std::size_t>(k)], members[static_cast<std::size_t>(j)]);
      is_labeled[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = 1;
    }
  }
  for (int i = 0; i < ds.size(); ++i) {
    (is_labeled[static_cast<std::size_t>(i)] ? out.labeled_indices : out.unlabeled_indices).push_back(i);
  }
  return out;
}

}  // namespace iclssl
