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
#include <string>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"
#include "common.hpp"
#include "matrix.hpp"

namespace skf::nn {

struct Tensor {
  std::string name;
  Matrix value;

  bool operator==(const Tensor& o) const { return name == o.name && value == o.value; }
};

/// Ordered registry of named parameter tensors. Slot order is creation order
/// and is what gradients and optimizer moments are aligned to.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix init);
  std::size_t slot(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return tensors_.size(); }
  const Tensor& operator[](std::size_t slot) const { return tensors_[slot]; }
  Tensor& operator[](std::size_t slot) { return tensors_[slot]; }
  const Tensor& at(const std::string& name) const { return tensors_[slot(name)]; }
  Tensor& at(const std::string& name) { return tensors_[slot(name)]; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  ad::Var bind(ad::Tape& tape, std::size_t slot) const {
    return tape.parameter(tensors_[slot].value, slot);
  }
  std::vector<Matrix> zero_grads() const;
  std::size_t scalar_count() const;
  /// FNV-1a over names and raw value bytes.
  std::uint64_t fingerprint() const;
  bool all_finite() const;

  bool operator==(const ParamStore& o) const { return tensors_ == o.tensors_; }

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws from a seeded stream.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Matrix uniform(Eigen::Index rows, Eigen::Index cols, double fan_in);
  Matrix zeros(Eigen::Index rows, Eigen::Index cols) { return Matrix::Zero(rows, cols); }
  Matrix ones(Eigen::Index rows, Eigen::Index cols) { return Matrix::Ones(rows, cols); }

 private:
  Rng rng_;
};

struct Linear {
  std::size_t weight = 0;  // in x out
  std::size_t bias = 0;    // 1 x out

  static Linear create(ParamStore& store, Initializer& init, const std::string& name, Eigen::Index in,
                       Eigen::Index out, bool zero = false);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const;
};

struct LayerNorm {
  std::size_t gamma = 0;
  std::size_t beta = 0;

  static LayerNorm create(ParamStore& store, Initializer& init, const std::string& name, Eigen::Index width);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const;
};

/// Pre-norm transformer block: x + MHA(LN(x)), then x + FF(LN(x)) with a
/// GELU feed-forward of width ff_mult * d.
struct TransformerBlock {
  LayerNorm ln_attn;
  Linear query, key, value, out;
  LayerNorm ln_ff;
  Linear ff_in, ff_out;
  int heads = 1;

  static TransformerBlock create(ParamStore& store, Initializer& init, const std::string& name,
                                 Eigen::Index d_model, int heads, int ff_mult);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x,
                     const ad::AttentionLayout& layout) const;
};

}  // namespace skf::nn
