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
#include <vector>

#include "pvad/error.hpp"
#include "pvad/tensor.hpp"

namespace pvad::nn {

// Adam with bias correction.  Moment buffers are aligned index-for-index
// with the ParameterSet the state was created from.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState for_params(const ParameterSet& params, double lr = 1e-3) {
    AdamState st;
    st.lr = lr;
    st.m.reserve(params.count());
    st.v.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
      st.m.emplace_back(params.value(static_cast<int>(i)).shape());
      st.v.emplace_back(params.value(static_cast<int>(i)).shape());
    }
    return st;
  }
};

inline void adam_step(ParameterSet& params, AdamState& st) {
  if (st.m.size() != params.count() || st.v.size() != params.count())
    throw UsageError("adam_step: state does not match parameter set");
  ++st.step_count;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < params.count(); ++i) {
    Tensor& value = params.value(static_cast<int>(i));
    const Tensor& grad = params.grad(static_cast<int>(i));
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    if (!value.same_shape(m) || !value.same_shape(grad))
      throw UsageError("adam_step: shape drift between state and parameters");
    double* pv = value.data();
    const double* pg = grad.data();
    double* pm = m.data();
    double* pvv = v.data();
    const std::size_t n = value.size();
    for (std::size_t k = 0; k < n; ++k) {
      pm[k] = st.beta1 * pm[k] + (1.0 - st.beta1) * pg[k];
      pvv[k] = st.beta2 * pvv[k] + (1.0 - st.beta2) * pg[k] * pg[k];
      const double mhat = pm[k] / bc1;
      const double vhat = pvv[k] / bc2;
      pv[k] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace pvad::nn
