// Copyright (c) 2026 The pvadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pvad/version.hpp"

namespace pvad {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random stream.  All sampling goes through the explicit
// mappings below rather than <random> distributions, whose output is
// implementation-defined; this keeps corpora and checkpoints bit-identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)), root_(splitmix64(seed)) {}

  // Derives an independent child stream from a label and index.
  // Used to give every utterance/segment its own stream so generation
  // order cannot influence results.
  Rng stream(const std::string& label, uint64_t index = 0) const {
    uint64_t h = fnv1a64(label.data(), label.size(), root_);
    h = splitmix64(h ^ splitmix64(index));
    return Rng(h, Tag{});
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive integer range.  Modulo bias is negligible for the spans
  // used here and keeps the mapping single-draw.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(engine_() % span);
  }

  double gaussian() {
    // Box-Muller; consumes exactly two draws.
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  struct Tag {};
  Rng(uint64_t mixed, Tag) : engine_(mixed), root_(mixed) {}

  std::mt19937_64 engine_;
  uint64_t root_ = 0;
};

}  // namespace pvad
