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

#include "pvad/rng.hpp"
#include "pvad/tensor.hpp"

namespace pvad::nn {

// Weight matrices ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) with
// fan_in = column count; biases (rank-1 tensors) start at zero.  Each
// parameter draws from its own name-derived stream, so adding or
// reordering parameters never perturbs the others' values.
inline void init_uniform_fan_in(ParameterSet& ps, const Rng& root) {
  for (std::size_t i = 0; i < ps.count(); ++i) {
    Tensor& t = ps.value(static_cast<int>(i));
    if (t.rank() < 2) {
      t.fill(0.0);
      continue;
    }
    Rng stream = root.stream(ps.name(static_cast<int>(i)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols()));
    for (std::size_t k = 0; k < t.size(); ++k) t.data()[k] = stream.uniform(-bound, bound);
  }
}

}  // namespace pvad::nn
