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

#include "nn.hpp"

#include <cmath>
#include <cstring>

namespace skf::nn {

std::size_t ParamStore::add(std::string name, Matrix init) {
  if (index_.count(name) != 0) fail(ErrorKind::kConfig, "duplicate parameter '" + name + "'");
  index_.emplace(name, tensors_.size());
  tensors_.push_back({std::move(name), std::move(init)});
  return tensors_.size() - 1;
}

std::size_t ParamStore::slot(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::kConfig, "unknown parameter '" + name + "'");
  return it->second;
}

std::vector<Matrix> ParamStore::zero_grads() const {
  std::vector<Matrix> grads;
  grads.reserve(tensors_.size());
  for (const auto& t : tensors_) grads.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  return grads;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& t : tensors_) {
    feed(t.name.data(), t.name.size());
    feed(t.value.data(), sizeof(double) * static_cast<std::size_t>(t.value.size()));
  }
  return h;
}

bool ParamStore::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

Matrix Initializer::uniform(Eigen::Index rows, Eigen::Index cols, double fan_in) {
  const double bound = 1.0 / std::sqrt(fan_in);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng_.uniform(-bound, bound);
  return m;
}

Linear Linear::create(ParamStore& store, Initializer& init, const std::string& name, Eigen::Index in,
                      Eigen::Index out, bool zero) {
  Linear l;
  l.weight = store.add(name + ".weight", zero ? init.zeros(in, out) : init.uniform(in, out, static_cast<double>(in)));
  l.bias = store.add(name + ".bias", zero ? init.zeros(1, out) : init.uniform(1, out, static_cast<double>(in)));
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  return ad::add_row(ad::matmul(x, store.bind(tape, weight)), store.bind(tape, bias));
}

LayerNorm LayerNorm::create(ParamStore& store, Initializer& init, const std::string& name, Eigen::Index width) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".gamma", init.ones(1, width));
  ln.beta = store.add(name + ".beta", init.zeros(1, width));
  return ln;
}

ad::Var LayerNorm::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  return ad::layer_norm(x, store.bind(tape, gamma), store.bind(tape, beta));
}

TransformerBlock TransformerBlock::create(ParamStore& store, Initializer& init, const std::string& name,
                                          Eigen::Index d_model, int heads, int ff_mult) {
  TransformerBlock b;
  b.heads = heads;
  b.ln_attn = LayerNorm::create(store, init, name + ".ln_attn", d_model);
  b.query = Linear::create(store, init, name + ".attn.query", d_model, d_model);
  b.key = Linear::create(store, init, name + ".attn.key", d_model, d_model);
  b.value = Linear::create(store, init, name + ".attn.value", d_model, d_model);
  b.out = Linear::create(store, init, name + ".attn.out", d_model, d_model);
  b.ln_ff = LayerNorm::create(store, init, name + ".ln_ff", d_model);
  b.ff_in = Linear::create(store, init, name + ".ff.in", d_model, d_model * ff_mult);
  b.ff_out = Linear::create(store, init, name + ".ff.out", d_model * ff_mult, d_model);
  return b;
}

ad::Var TransformerBlock::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x,
                                     const ad::AttentionLayout& layout) const {
  ad::Var h = ln_attn(tape, store, x);
  ad::Var attended = ad::attention(query(tape, store, h), key(tape, store, h), value(tape, store, h), layout);
  ad::Var y = ad::add(x, out(tape, store, attended));
  ad::Var f = ff_out(tape, store, ad::gelu(ff_in(tape, store, ln_ff(tape, store, y))));
  return ad::add(y, f);
}

}  // namespace skf::nn
