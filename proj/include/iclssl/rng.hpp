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
#include <random>
#include <string_view>
#include <vector>

namespace iclssl {

/// Seeded generator. Every stochastic operation takes one by reference so a
/// run is reproducible from its seed alone; independent streams are derived
/// with `fork` rather than sharing one engine across subsystems.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent generator for a named sub-stream. Does not advance *this.
  [[nodiscard]] Rng fork(std::string_view stream) const;
  [[nodiscard]] Rng fork(std::uint64_t stream) const;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [lo, hi].
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);
  /// Beta(a, b) via the ratio of two gamma variates.
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i - 1)));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser; used for seed derivation.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace iclssl
