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

#include "iclssl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "iclssl/errors.hpp"

namespace iclssl {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_u64(key, item));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one seed");
  return out;
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

#define ICL_INT(member)                                                                      \
  Field{[](const TrainConfig& c) { return std::to_string(c.member); },                       \
        [](TrainConfig& c, const std::string& k, const std::string& v) {                     \
          c.member = static_cast<decltype(c.member)>(parse_int(k, v));                       \
        }}
#define ICL_DOUBLE(member)                                                                   \
  Field{[](const TrainConfig& c) { return format_double(c.member); },                        \
        [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }}
#define ICL_BOOL(member)                                                                     \
  Field{[](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); },       \
        [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }}
#define ICL_ENUM(member, parser)                                                             \
  Field{[](const TrainConfig& c) { return std::string(to_string(c.member)); },               \
        [](TrainConfig& c, const std::string&, const std::string& v) { c.member = parser(v); }}
#define ICL_PATH(member)                                                                     \
  Field{[](const TrainConfig& c) { return c.member.string(); },                              \
        [](TrainConfig& c, const std::string&, const std::string& v) { c.member = v; }}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }
LrSchedule parse_lr_schedule(std::string_view v) {
  if (v == "constant") return LrSchedule::constant;
  if (v == "cosine") return LrSchedule::cosine;
  throw ConfigError("unknown lr_schedule '" + std::string(v) + "'");
}
std::string_view to_string(ReportMetric m) { return m == ReportMetric::best ? "best" : "final"; }
ReportMetric parse_report_metric(std::string_view v) {
  if (v == "best") return ReportMetric::best;
  if (v == "final") return ReportMetric::final;
  throw ConfigError("unknown report_metric '" + std::string(v) + "'");
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"name", Field{[](const TrainConfig& c) { return c.name; },
                     [](TrainConfig& c, const std::string&, const std::string& v) { c.name = v; }}},
      {"dataset", ICL_ENUM(dataset, parse_dataset_name)},
      {"architecture", ICL_ENUM(architecture, parse_architecture)},
      {"labels_per_class", ICL_INT(labels_per_class)},
      {"unlabeled_limit", ICL_INT(unlabeled_limit)},
      {"test_limit", ICL_INT(test_limit)},
      {"epochs", ICL_INT(epochs)},
      {"batch_size", ICL_INT(batch_size)},
      {"learning_rate", ICL_DOUBLE(learning_rate)},
      {"momentum", ICL_DOUBLE(momentum)},
      {"weight_decay", ICL_DOUBLE(weight_decay)},
      {"lr_schedule", ICL_ENUM(lr_schedule, parse_lr_schedule)},
      {"loss_alpha", ICL_DOUBLE(loss_alpha)},
      {"beta_param", ICL_DOUBLE(beta_param)},
      {"tau", ICL_DOUBLE(tau)},
      {"temperature", ICL_DOUBLE(temperature)},
      {"mu", ICL_INT(mu)},
      {"seed", Field{[](const TrainConfig& c) { return std::to_string(c.seed); },
                     [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }}},
      {"seeds", Field{[](const TrainConfig& c) {
                        std::string s;
                        for (std::size_t i = 0; i < c.seeds.size(); ++i) {
                          if (i > 0) s += ",";
                          s += std::to_string(c.seeds[i]);
                        }
                        return s;
                      },
                      [](TrainConfig& c, const std::string& k, const std::string& v) {
                        c.seeds = parse_seed_list(k, v);
                      }}},
      {"method", ICL_ENUM(method, parse_method)},
      {"icl_attach", ICL_BOOL(icl_attach)},
      {"ema_decay", ICL_DOUBLE(ema_decay)},
      {"consistency_weight", ICL_DOUBLE(consistency_weight)},
      {"pair_mode", ICL_ENUM(pair_mode, parse_pair_mode)},
      {"pseudo_target", ICL_ENUM(pseudo_target, parse_pseudo_target)},
      {"negatives_source", ICL_ENUM(negatives_source, parse_negatives_source)},
      {"positive_source", ICL_ENUM(positive_source, parse_positive_source)},
      {"augment", ICL_BOOL(augment)},
      {"weak_hflip_prob", ICL_DOUBLE(weak_hflip_prob)},
      {"weak_pad", ICL_INT(weak_pad)},
      {"strong_num_ops", ICL_INT(strong_num_ops)},
      {"strong_magnitude", ICL_DOUBLE(strong_magnitude)},
      {"embed_dim", ICL_INT(embed_dim)},
      {"hidden", ICL_INT(hidden)},
      {"divergence_limit", ICL_DOUBLE(divergence_limit)},
      {"report_metric", ICL_ENUM(report_metric, parse_report_metric)},
      {"drift_epochs", ICL_INT(drift_epochs)},
      {"drift_probability", ICL_DOUBLE(drift_probability)},
      {"drift_rotate_degrees", ICL_DOUBLE(drift_rotate_degrees)},
      {"prefetch", ICL_BOOL(prefetch)},
      {"save_checkpoint", ICL_BOOL(save_checkpoint)},
      {"cache_dir", ICL_PATH(cache_dir)},
      {"output_dir", ICL_PATH(output_dir)},
      {"checkpoint", ICL_PATH(checkpoint)},
  };
  return table;
}

#undef ICL_INT
#undef ICL_DOUBLE
#undef ICL_BOOL
#undef ICL_ENUM
#undef ICL_PATH

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::icl_ssl: return "icl_ssl";
    case Method::supervised: return "supervised";
    case Method::fixmatch_lite: return "fixmatch_lite";
    case Method::mean_teacher_lite: return "mean_teacher_lite";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (auto m : {Method::icl_ssl, Method::supervised, Method::fixmatch_lite, Method::mean_teacher_lite}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown method '" + std::string(text) + "'");
}

std::string_view to_string(PositiveSource s) {
  return s == PositiveSource::interpolation ? "interpolation" : "augmentation";
}

PositiveSource parse_positive_source(std::string_view text) {
  if (text == "interpolation") return PositiveSource::interpolation;
  if (text == "augmentation") return PositiveSource::augmentation;
  throw ConfigError("unknown positive_source '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 2, "batch_size must be >= 2");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0,1)");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0,1]");
  require(temperature > 0.0, "temperature must be > 0");
  require(beta_param > 0.0, "beta_param must be > 0");
  require(loss_alpha >= 0.0, "loss_alpha must be >= 0");
  require(mu >= 1, "mu must be >= 1");
  require(labels_per_class >= 1, "labels_per_class must be >= 1");
  require(unlabeled_limit >= 0 && test_limit >= 0, "limits must be >= 0");
  require(ema_decay >= 0.0 && ema_decay <= 1.0, "ema_decay must lie in [0,1]");
  require(consistency_weight >= 0.0, "consistency_weight must be >= 0");
  require(weak_hflip_prob >= 0.0 && weak_hflip_prob <= 1.0, "weak_hflip_prob must lie in [0,1]");
  require(weak_pad >= 0, "weak_pad must be >= 0");
  require(strong_num_ops >= 0, "strong_num_ops must be >= 0");
  require(strong_magnitude >= 0.0 && strong_magnitude <= 1.0, "strong_magnitude must lie in [0,1]");
  require(embed_dim >= 1 && hidden >= 1, "embed_dim and hidden must be >= 1");
  require(divergence_limit > 0.0, "divergence_limit must be > 0");
  require(drift_epochs >= 1, "drift_epochs must be >= 1");
  require(drift_probability >= 0.0 && drift_probability <= 1.0, "drift_probability must lie in [0,1]");
  require(!seeds.empty(), "seeds must be non-empty");
  require(!name.empty() && name.find('/') == std::string::npos, "name must be a non-empty path component");
}

std::filesystem::path TrainConfig::resolved_cache_dir() const {
  return cache_dir.empty() ? default_cache_dir() : cache_dir;
}

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ConfigMap parse_overrides(std::span<const std::string> tokens) {
  ConfigMap out;
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + tok + "' is not key=value");
    std::string key = trim(std::string_view(tok).substr(0, eq));
    std::string value = trim(std::string_view(tok).substr(eq + 1));
    auto [it, inserted] = out.emplace(key, value);
    if (!inserted && it->second != value) {
      throw ConfigError("conflicting overrides for '" + key + "': '" + it->second + "' vs '" + value + "'");
    }
  }
  return out;
}

TrainConfig resolve_config(const ConfigMap& entries) {
  TrainConfig cfg;
  const auto& table = fields();
  for (const auto& [key, value] : entries) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig resolve_config(const ConfigMap& file, const ConfigMap& overrides) {
  ConfigMap merged = file;
  for (const auto& [k, v] : overrides) merged[k] = v;
  return resolve_config(merged);
}

ConfigMap to_config_map(const TrainConfig& cfg) {
  ConfigMap out;
  for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
  return out;
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : to_config_map(cfg)) out += key + " = " + value + "\n";
  return out;
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, field] : fields()) out.push_back(key);
  return out;
}

}  // namespace iclssl
