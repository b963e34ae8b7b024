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

#pragma once

#include <cstdint>
#include <vector>

#include "segbert/layers.hpp"

namespace segbert::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Adam with bias-corrected moments over every parameter of a set.
class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions options = {});

  // Applies one update from the accumulated gradients. A non-finite gradient
  // anywhere aborts the step with Errc::poisoned_gradient before any
  // parameter is touched.
  void step();

  std::uint64_t step_count() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) noexcept { options_.learning_rate = lr; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  AdamOptions options_;
  std::uint64_t steps_ = 0;
};

}  // namespace segbert::nn
