// Copyright 2026 The SkeleFusion Authors
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
#include <vector>

#include "matrix.hpp"
#include "nn.hpp"

namespace skf::train {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct AdamWState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;

  static AdamWState for_params(const nn::ParamStore& params);
  bool operator==(const AdamWState&) const = default;
};

/// One AdamW update: theta -= lr * wd * theta, then the bias-corrected Adam
/// step. A non-finite gradient aborts before anything is modified.
void optimizer_step(nn::ParamStore& params, const std::vector<Matrix>& grads, AdamWState& state, double lr,
                    const AdamWOptions& options = {});

}  // namespace skf::train
