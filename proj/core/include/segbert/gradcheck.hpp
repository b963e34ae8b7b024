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
#include <functional>
#include <string>
#include <vector>

#include "segbert/layers.hpp"

namespace segbert::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor),
  // so coordinates with near-zero gradients are judged on absolute error.
  double floor = 1e-4;
  std::size_t samples = 100;  // coordinates per case; all when fewer exist
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<parameter>[<flat index>]"
};

// The loss must rebuild its graph from the current parameter values on every
// call, with any randomness reseeded inside.
using LossFn = std::function<Var(Tape&)>;

// Central differences against Tape::backward on sampled coordinates of ps.
GradCheckResult check_gradients(const std::string& name, ParameterSet& ps, const LossFn& loss,
                                const GradCheckOptions& options = {});

// Every differentiable op, every layer kind, and the full speech-BERT and
// TTS losses on inputs of at most six frames.
std::vector<GradCheckResult> run_selfcheck(const GradCheckOptions& options = {});

}  // namespace segbert::nn
