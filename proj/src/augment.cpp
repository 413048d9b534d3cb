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

#include "iclssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "iclssl/errors.hpp"

namespace iclssl {
namespace {

double degrees_to_radians(double d) { return d * std::numbers::pi / 180.0; }

double sample_plane(const RowVector& image, const ImageShape& shape, int channel, double sx, double sy,
                    double fill) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  const int base = channel * shape.plane();
  auto at = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= shape.width || y >= shape.height) return fill;
    return image[base + y * shape.width + x];
  };
  double v = (1.0 - fx) * (1.0 - fy) * at(x0, y0);
  if (fx > 0.0) v += fx * (1.0 - fy) * at(x0 + 1, y0);
  if (fy > 0.0) v += (1.0 - fx) * fy * at(x0, y0 + 1);
  if (fx > 0.0 && fy > 0.0) v += fx * fy * at(x0 + 1, y0 + 1);
  return v;
}

/// Inverse-mapped affine warp about the image centre:
/// src = M * (dst - centre) + centre + t.
RowVector warp(const RowVector& image, const ImageShape& shape, double m00, double m01, double m10,
               double m11, double tx, double ty, double fill) {
  RowVector out(image.size());
  const double cx = (shape.width - 1) / 2.0;
  const double cy = (shape.height - 1) / 2.0;
  for (int ch = 0; ch < shape.channels; ++ch) {
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double sx = m00 * dx + m01 * dy + cx + tx;
        const double sy = m10 * dx + m11 * dy + cy + ty;
        out[ch * shape.plane() + y * shape.width + x] = sample_plane(image, shape, ch, sx, sy, fill);
      }
    }
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

/// Pad by `pad` on every side (reflect or constant) and crop a window whose
/// top-left corner is offset (ox, oy) in [0, 2*pad] from the padded origin.
RowVector pad_crop(const RowVector& image, const ImageShape& shape, int pad, int ox, int oy, bool reflect,
                   double fill) {
  RowVector out(image.size());
  for (int ch = 0; ch < shape.channels; ++ch) {
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        int sx = x + ox - pad;
        int sy = y + oy - pad;
        double v = fill;
        if (reflect) {
          v = image[ch * shape.plane() + reflect_index(sy, shape.height) * shape.width +
                    reflect_index(sx, shape.width)];
        } else if (sx >= 0 && sy >= 0 && sx < shape.width && sy < shape.height) {
          v = image[ch * shape.plane() + sy * shape.width + sx];
        }
        out[ch * shape.plane() + y * shape.width + x] = v;
      }
    }
  }
  return out;
}

RowVector resized_crop(const RowVector& image, const ImageShape& shape, int x0, int y0, int cw, int chh) {
  RowVector out(image.size());
  for (int ch = 0; ch < shape.channels; ++ch) {
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        const double sx = x0 + (x + 0.5) * cw / shape.width - 0.5;
        const double sy = y0 + (y + 0.5) * chh / shape.height - 0.5;
        // Clamp into the crop so no fill value leaks in.
        const double cx = std::clamp(sx, static_cast<double>(x0), static_cast<double>(x0 + cw - 1));
        const double cy = std::clamp(sy, static_cast<double>(y0), static_cast<double>(y0 + chh - 1));
        out[ch * shape.plane() + y * shape.width + x] = sample_plane(image, shape, ch, cx, cy, 0.0);
      }
    }
  }
  return out;
}

void clamp_unit(RowVector& v) { v = v.cwiseMax(0.0).cwiseMin(1.0); }

template <typename Fn>
ImageBatch map_images(const ImageBatch& batch, Fn&& fn) {
  ImageBatch out = batch;
  for (int i = 0; i < batch.size(); ++i) {
    RowVector img = batch.pixels.row(i);
    RowVector res = fn(img);
    clamp_unit(res);
    out.pixels.row(i) = res;
  }
  return out;
}

}  // namespace

std::string_view to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::none: return "none";
    case AugmentKind::weak: return "weak";
    case AugmentKind::strong: return "strong";
    case AugmentKind::vflip: return "vflip";
    case AugmentKind::hflip: return "hflip";
    case AugmentKind::rotate: return "rotate";
    case AugmentKind::crop: return "crop";
    case AugmentKind::recrop: return "recrop";
  }
  return "?";
}

AugmentKind parse_augment_kind(std::string_view text) {
  for (auto k : {AugmentKind::none, AugmentKind::weak, AugmentKind::strong, AugmentKind::vflip,
                 AugmentKind::hflip, AugmentKind::rotate, AugmentKind::crop, AugmentKind::recrop}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown augmentation kind '" + std::string(text) + "'");
}

std::string_view to_string(StrongOp op) {
  switch (op) {
    case StrongOp::rotate: return "rotate";
    case StrongOp::shear_x: return "shear_x";
    case StrongOp::shear_y: return "shear_y";
    case StrongOp::translate_x: return "translate_x";
    case StrongOp::translate_y: return "translate_y";
    case StrongOp::brightness: return "brightness";
    case StrongOp::contrast: return "contrast";
    case StrongOp::solarize: return "solarize";
  }
  return "?";
}

RowVector hflip(const RowVector& image, const ImageShape& shape) {
  RowVector out(image.size());
  for (int ch = 0; ch < shape.channels; ++ch)
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        out[ch * shape.plane() + y * shape.width + x] =
            image[ch * shape.plane() + y * shape.width + (shape.width - 1 - x)];
  return out;
}

RowVector vflip(const RowVector& image, const ImageShape& shape) {
  RowVector out(image.size());
  for (int ch = 0; ch < shape.channels; ++ch)
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        out[ch * shape.plane() + y * shape.width + x] =
            image[ch * shape.plane() + (shape.height - 1 - y) * shape.width + x];
  return out;
}

RowVector rotate(const RowVector& image, const ImageShape& shape, double degrees, double fill) {
  if (degrees == 0.0) return image;
  const double a = degrees_to_radians(degrees);
  // Inverse rotation maps destination back to source.
  return warp(image, shape, std::cos(a), std::sin(a), -std::sin(a), std::cos(a), 0.0, 0.0, fill);
}

RowVector apply_strong_op(const RowVector& image, const ImageShape& shape, StrongOp op, double magnitude,
                          double fill) {
  RowVector out;
  switch (op) {
    case StrongOp::rotate: out = rotate(image, shape, 30.0 * magnitude, fill); break;
    case StrongOp::shear_x: out = warp(image, shape, 1.0, 0.3 * magnitude, 0.0, 1.0, 0.0, 0.0, fill); break;
    case StrongOp::shear_y: out = warp(image, shape, 1.0, 0.0, 0.3 * magnitude, 1.0, 0.0, 0.0, fill); break;
    case StrongOp::translate_x:
      out = warp(image, shape, 1.0, 0.0, 0.0, 1.0, 0.3 * magnitude * shape.width, 0.0, fill);
      break;
    case StrongOp::translate_y:
      out = warp(image, shape, 1.0, 0.0, 0.0, 1.0, 0.0, 0.3 * magnitude * shape.height, fill);
      break;
    case StrongOp::brightness: out = image * (1.0 + 0.9 * magnitude); break;
    case StrongOp::contrast: {
      const double mean = image.mean();
      out = (image.array() - mean) * (1.0 + 0.9 * magnitude) + mean;
      break;
    }
    case StrongOp::solarize: {
      const double threshold = 1.0 - std::abs(magnitude);
      out = image.unaryExpr([threshold](double v) { return v > threshold ? 1.0 - v : v; });
      break;
    }
  }
  clamp_unit(out);
  return out;
}

ImageBatch weak_augment(const ImageBatch& batch, Rng& rng, const WeakAugmentConfig& cfg) {
  if (cfg.pad < 0 || cfg.pad >= std::min(batch.shape.height, batch.shape.width)) {
    throw ConfigError("weak augmentation pad must be in [0, image side)");
  }
  return map_images(batch, [&](const RowVector& img) {
    RowVector res = rng.bernoulli(cfg.hflip_prob) ? hflip(img, batch.shape) : img;
    if (cfg.pad > 0) {
      const int ox = rng.uniform_int(0, 2 * cfg.pad);
      const int oy = rng.uniform_int(0, 2 * cfg.pad);
      res = pad_crop(res, batch.shape, cfg.pad, ox, oy, /*reflect=*/true, 0.0);
    }
    return res;
  });
}

ImageBatch strong_augment(const ImageBatch& batch, Rng& rng, const StrongAugmentConfig& cfg) {
  if (cfg.num_ops < 0) throw ConfigError("strong augmentation num_ops must be >= 0");
  return map_images(batch, [&](const RowVector& img) {
    RowVector res = img;
    for (int k = 0; k < cfg.num_ops; ++k) {
      const auto op = static_cast<StrongOp>(rng.uniform_int(0, kStrongOpCount - 1));
      double m = rng.uniform(0.0, cfg.max_magnitude);
      if (op != StrongOp::solarize && rng.bernoulli(0.5)) m = -m;
      res = apply_strong_op(res, batch.shape, op, m, cfg.fill);
    }
    return res;
  });
}

ImageBatch drift_augment(const ImageBatch& batch, AugmentKind kind, Rng& rng, const DriftAugmentConfig& cfg) {
  const ImageShape& shape = batch.shape;
  switch (kind) {
    case AugmentKind::none: return batch;
    case AugmentKind::hflip:
      return map_images(batch, [&](const RowVector& img) {
        return rng.bernoulli(cfg.probability) ? hflip(img, shape) : img;
      });
    case AugmentKind::vflip:
      return map_images(batch, [&](const RowVector& img) {
        return rng.bernoulli(cfg.probability) ? vflip(img, shape) : img;
      });
    case AugmentKind::rotate:
      return map_images(batch, [&](const RowVector& img) {
        if (!rng.bernoulli(cfg.probability)) return img;
        return rotate(img, shape, rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees), 0.0);
      });
    case AugmentKind::crop:
      return map_images(batch, [&](const RowVector& img) {
        if (!rng.bernoulli(cfg.probability) || cfg.crop_pad == 0) return img;
        const int ox = rng.uniform_int(0, 2 * cfg.crop_pad);
        const int oy = rng.uniform_int(0, 2 * cfg.crop_pad);
        return pad_crop(img, shape, cfg.crop_pad, ox, oy, /*reflect=*/false, 0.0);
      });
    case AugmentKind::recrop:
      return map_images(batch, [&](const RowVector& img) {
        if (!rng.bernoulli(cfg.probability)) return img;
        const double scale = std::sqrt(rng.uniform(cfg.recrop_min_scale, 1.0));
        const int cw = std::max(1, static_cast<int>(std::lround(scale * shape.width)));
        const int chh = std::max(1, static_cast<int>(std::lround(scale * shape.height)));
        const int x0 = rng.uniform_int(0, shape.width - cw);
        const int y0 = rng.uniform_int(0, shape.height - chh);
        return resized_crop(img, shape, x0, y0, cw, chh);
      });
    case AugmentKind::weak:
    case AugmentKind::strong: break;
  }
  throw ConfigError("'" + std::string(to_string(kind)) + "' is not a drift augmentation kind");
}

}  // namespace iclssl
