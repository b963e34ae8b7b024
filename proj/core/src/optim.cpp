/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "segbert/optim.hpp"

#include <cmath>

#include "segbert/error.hpp"

namespace segbert::nn {

Adam::Adam(ParameterSet& params, AdamOptions options)
    : params_(params.all()), options_(options) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const Parameter* p : params_) {
    first_moment_.emplace_back(p->value.shape(), 0.0);
    second_moment_.emplace_back(p->value.shape(), 0.0);
  }
}

void Adam::step() {
  for (const Parameter* p : params_)
    if (!p->grad.all_finite())
      fail(Errc::poisoned_gradient, "non-finite gradient in " + p->name);

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correct1 = 1.0 - std::pow(options_.beta1, t);
  const double correct2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& m = first_moment_[k];
    Tensor& v = second_moment_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      if (g == 0.0 && m[i] == 0.0) continue;
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p.value[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

}  // namespace segbert::nn
