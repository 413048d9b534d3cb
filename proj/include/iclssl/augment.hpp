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

#include <array>
#include <cstdint>
#include <string_view>

#include "iclssl/rng.hpp"
#include "iclssl/tensor.hpp"

namespace iclssl {

enum class AugmentKind { none, weak, strong, vflip, hflip, rotate, crop, recrop };

std::string_view to_string(AugmentKind kind);
AugmentKind parse_augment_kind(std::string_view text);

/// The drift-study kinds, `none` first.
inline constexpr std::array<AugmentKind, 6> kDriftKinds = {
    AugmentKind::none, AugmentKind::hflip, AugmentKind::vflip,
    AugmentKind::rotate, AugmentKind::crop, AugmentKind::recrop};

struct AugmentationSpec {
  AugmentKind kind = AugmentKind::none;
  std::uint64_t rng_seed = 0;
};

/// Random horizontal flip followed by reflect-pad and random crop back to
/// the original size.
struct WeakAugmentConfig {
  double hflip_prob = 0.5;
  int pad = 4;
};

/// RandAugment-style: `num_ops` ops drawn uniformly with replacement from an
/// 8-entry registry, each with magnitude U(0, max_magnitude) scaled to the
/// op's range. Geometric ops fill uncovered pixels with `fill`.
struct StrongAugmentConfig {
  int num_ops = 2;
  double max_magnitude = 1.0;
  double fill = 0.0;
};

enum class StrongOp { rotate, shear_x, shear_y, translate_x, translate_y, brightness, contrast, solarize };
inline constexpr int kStrongOpCount = 8;
std::string_view to_string(StrongOp op);

/// Applies one registry op at magnitude in [0,1] (signed ops take the sign
/// of `magnitude`, so it may be in [-1,1]) to a single flattened image.
RowVector apply_strong_op(const RowVector& image, const ImageShape& shape, StrongOp op,
                          double magnitude, double fill);

/// Single-transform probes for the drift study; each applied per image with
/// probability `probability`.
struct DriftAugmentConfig {
  double probability = 0.5;
  double rotate_degrees = 30.0;  // angle ~ U(-d, d)
  int crop_pad = 4;              // zero pad, then random crop
  double recrop_min_scale = 0.5; // area fraction of the random resized crop
};

ImageBatch weak_augment(const ImageBatch& batch, Rng& rng, const WeakAugmentConfig& cfg = {});
ImageBatch strong_augment(const ImageBatch& batch, Rng& rng, const StrongAugmentConfig& cfg = {});
/// Throws ConfigError unless kind is one of the drift kinds (`none` is the
/// identity).
ImageBatch drift_augment(const ImageBatch& batch, AugmentKind kind, Rng& rng,
                         const DriftAugmentConfig& cfg = {});

/// Deterministic single-image geometric primitives.
RowVector hflip(const RowVector& image, const ImageShape& shape);
RowVector vflip(const RowVector& image, const ImageShape& shape);
RowVector rotate(const RowVector& image, const ImageShape& shape, double degrees, double fill);

}  // namespace iclssl
