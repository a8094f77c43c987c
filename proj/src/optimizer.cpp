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

#include "optimizer.hpp"

#include <cmath>

#include "common.hpp"

namespace skf::train {

AdamWState AdamWState::for_params(const nn::ParamStore& params) {
  AdamWState state;
  state.first_moment = params.zero_grads();
  state.second_moment = params.zero_grads();
  return state;
}

void optimizer_step(nn::ParamStore& params, const std::vector<Matrix>& grads, AdamWState& state, double lr,
                    const AdamWOptions& options) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    fail(ErrorKind::kShape, "optimizer: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].value.rows() || g.cols() != params[i].value.cols()) {
      fail(ErrorKind::kShape, "optimizer: gradient shape mismatch for '" + params[i].name + "'");
    }
    if (!g.allFinite()) {
      fail(ErrorKind::kDivergence, "optimizer: non-finite gradient in '" + params[i].name + "' at step " +
                                       std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& theta = params[i].value;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = grads[i];
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseAbs2();
    theta *= 1.0 - lr * options.weight_decay;
    theta.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + options.eps);
  }
}

}  // namespace skf::train
