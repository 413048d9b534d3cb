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

#include "iclssl/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "iclssl/errors.hpp"

namespace iclssl {
namespace fs = std::filesystem;

namespace {

constexpr char kCkptMagic[8] = {'I', 'C', 'L', 'S', 'S', 'L', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

void build_linear(ModelBundle& m, const ModelSpec& s, Rng& rng) {
  m.encoder.emplace<Linear>(s.input.size(), s.hidden, rng);
  m.classifier.emplace<Linear>(s.hidden, s.classes, rng);
  m.projector.emplace<Linear>(s.hidden, s.embed_dim, rng);
}

void build_mlp2(ModelBundle& m, const ModelSpec& s, Rng& rng) {
  m.encoder.emplace<Linear>(s.input.size(), s.hidden, rng);
  m.encoder.emplace<Relu>(s.hidden);
  m.classifier.emplace<Linear>(s.hidden, s.classes, rng);
}

void build_projector(ModelBundle& m, const ModelSpec& s, Rng& rng) {
  const int f = m.encoder.output_size();
  m.projector.emplace<Linear>(f, f, rng);
  m.projector.emplace<Relu>(f);
  m.projector.emplace<Linear>(f, s.embed_dim, rng);
}

void build_smallcnn(ModelBundle& m, const ModelSpec& s, Rng& rng) {
  ImageShape shape = s.input;
  const int widths[4] = {32, 64, 128, 128};
  for (int b = 0; b < 4; ++b) {
    auto& conv = m.encoder.emplace<Conv2d>(shape, widths[b], 3, 1, 1, rng);
    shape = conv.output_shape();
    m.encoder.emplace<Relu>(shape.size());
    if (b < 2) {
      auto& pool = m.encoder.emplace<MaxPool2d>(shape, 2);
      shape = pool.output_shape();
    }
  }
  m.encoder.emplace<GlobalAvgPool>(shape);
  m.classifier.emplace<Linear>(shape.channels, s.classes, rng);
}

void build_wrn28(ModelBundle& m, const ModelSpec& s, Rng& rng) {
  constexpr int kBlocksPerGroup = (28 - 4) / 6;
  auto& stem = m.encoder.emplace<Conv2d>(s.input, 16, 3, 1, 1, rng, false);
  ImageShape shape = stem.output_shape();
  const int widths[3] = {16 * s.wrn_widen, 32 * s.wrn_widen, 64 * s.wrn_widen};
  for (int g = 0; g < 3; ++g) {
    for (int b = 0; b < kBlocksPerGroup; ++b) {
      const int stride = (g > 0 && b == 0) ? 2 : 1;
      auto& block = m.encoder.emplace<WideBasicBlock>(shape, widths[g], stride, rng);
      shape = block.output_shape();
    }
  }
  m.encoder.emplace<BatchNorm2d>(shape);
  m.encoder.emplace<Relu>(shape.size());
  m.encoder.emplace<GlobalAvgPool>(shape);
  m.classifier.emplace<Linear>(shape.channels, s.classes, rng);
}

void check_batch(const ModelBundle& m, const ImageBatch& batch) {
  if (!(batch.shape == m.spec().input) || batch.pixels.cols() != m.spec().input.size()) {
    throw DimensionError("model expects " + to_string(m.spec().input) + " images, got " +
                         to_string(batch.shape));
  }
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptionError("truncated checkpoint");
  return v;
}

}  // namespace

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::linear: return "linear";
    case Architecture::mlp2: return "mlp2";
    case Architecture::smallcnn: return "smallcnn";
    case Architecture::wrn28: return "wrn28";
  }
  return "?";
}

Architecture parse_architecture(std::string_view text) {
  for (auto a : {Architecture::linear, Architecture::mlp2, Architecture::smallcnn, Architecture::wrn28}) {
    if (to_string(a) == text) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(text) + "'");
}

ModelBundle ModelBundle::create(const ModelSpec& spec, Rng& rng) {
  if (spec.classes < 1 || spec.embed_dim < 1 || spec.hidden < 1 || spec.input.size() < 1) {
    throw DimensionError("model dimensions must be positive");
  }
  ModelBundle m;
  m.spec_ = spec;
  switch (spec.arch) {
    case Architecture::linear: build_linear(m, spec, rng); return m;
    case Architecture::mlp2: build_mlp2(m, spec, rng); break;
    case Architecture::smallcnn: build_smallcnn(m, spec, rng); break;
    case Architecture::wrn28: build_wrn28(m, spec, rng); break;
  }
  build_projector(m, spec, rng);
  return m;
}

std::vector<NamedParam> ModelBundle::named_params() {
  std::vector<NamedParam> out;
  auto add = [&out](const char* head, Sequential& seq) {
    auto ps = seq.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      out.push_back({std::string(head) + "." + std::to_string(i) + "." + ps[i]->name, ps[i]});
    }
  };
  add("encoder", encoder);
  add("classifier", classifier);
  add("projector", projector);
  return out;
}

void ModelBundle::zero_grad() {
  for (auto& np : named_params()) np.param->grad.setZero();
}

FeatureBatch encode(ModelBundle& m, const ImageBatch& batch) {
  check_batch(m, batch);
  return m.encoder.forward(batch.pixels, Mode::eval, nullptr);
}

LogitBatch classify(ModelBundle& m, const FeatureBatch& features) {
  return m.classifier.forward(features, Mode::eval, nullptr);
}

EmbeddingBatch project(ModelBundle& m, const FeatureBatch& features, bool normalize) {
  Matrix raw = m.projector.forward(features, Mode::eval, nullptr);
  return normalize ? normalize_rows(raw) : raw;
}

Matrix normalize_rows(const Matrix& raw) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    if (!(n >= kMinEmbeddingNorm)) {
      throw DegenerateEmbeddingError("embedding row " + std::to_string(i) + " has norm " + std::to_string(n));
    }
    out.row(i) = raw.row(i) / n;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& raw, const Matrix& normalized, const Matrix& grad) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    const double dot = normalized.row(i).dot(grad.row(i));
    out.row(i) = (grad.row(i) - dot * normalized.row(i)) / n;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

void save_checkpoint(const fs::path& path, ModelBundle& model, std::string_view config_text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const ModelSpec& s = model.spec();
    out.write(kCkptMagic, sizeof(kCkptMagic));
    put<std::uint32_t>(out, kCkptVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.arch));
    for (int v : {s.input.channels, s.input.height, s.input.width, s.classes, s.embed_dim, s.hidden, s.wrn_widen}) {
      put<std::int32_t>(out, v);
    }
    auto params = model.named_params();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& np : params) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(np.name.size()));
      out.write(np.name.data(), static_cast<std::streamsize>(np.name.size()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(np.param->value.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(np.param->value.cols()));
      out.write(reinterpret_cast<const char*>(np.param->value.data()),
                static_cast<std::streamsize>(np.param->value.size() * sizeof(double)));
    }
    put<std::uint64_t>(out, static_cast<std::uint64_t>(config_text.size()));
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    if (!out) throw IoError("short write to checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[sizeof(kCkptMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
    throw CorruptionError("not a checkpoint: " + path.string());
  }
  if (get<std::uint32_t>(in) != kCkptVersion) throw CorruptionError("unsupported checkpoint version");
  ModelSpec s;
  const auto arch = get<std::uint32_t>(in);
  if (arch > static_cast<std::uint32_t>(Architecture::wrn28)) throw CorruptionError("unknown architecture id");
  s.arch = static_cast<Architecture>(arch);
  s.input.channels = get<std::int32_t>(in);
  s.input.height = get<std::int32_t>(in);
  s.input.width = get<std::int32_t>(in);
  s.classes = get<std::int32_t>(in);
  s.embed_dim = get<std::int32_t>(in);
  s.hidden = get<std::int32_t>(in);
  s.wrn_widen = get<std::int32_t>(in);
  Rng rng(0);
  Checkpoint ck{ModelBundle::create(s, rng), {}};
  auto params = ck.model.named_params();
  if (get<std::uint32_t>(in) != params.size()) throw CorruptionError("checkpoint parameter count mismatch");
  for (auto& np : params) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (name != np.name || rows != static_cast<std::uint64_t>(np.param->value.rows()) ||
        cols != static_cast<std::uint64_t>(np.param->value.cols())) {
      throw CorruptionError("checkpoint parameter '" + name + "' does not match the architecture");
    }
    in.read(reinterpret_cast<char*>(np.param->value.data()),
            static_cast<std::streamsize>(np.param->value.size() * sizeof(double)));
    if (!in) throw CorruptionError("truncated checkpoint parameter " + name);
  }
  const auto text_len = get<std::uint64_t>(in);
  ck.config_text.resize(text_len);
  in.read(ck.config_text.data(), static_cast<std::streamsize>(text_len));
  if (!in) throw CorruptionError("truncated checkpoint config");
  return ck;
}

}  // namespace iclssl
