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

#include "autodiff.hpp"

#include <cmath>

#include "common.hpp"

namespace skf::ad {

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Matrix value) {
  Node node;
  node.own = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::input(Matrix value) {
  Node node;
  node.own = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const Matrix& value, std::size_t slot) {
  Node node;
  node.external = &value;
  if (track_params_) {
    node.requires_grad = true;
    node.param_slot = static_cast<std::int64_t>(slot);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node node;
  node.own = std::move(value);
  for (Var p : parents) {
    if (p.tape_ != this) fail(ErrorKind::kInvalidArgument, "autodiff: operands live on different tapes");
    node.requires_grad = node.requires_grad || requires_grad(p);
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.external ? *n.external : n.own;
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Tape::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) fail(ErrorKind::kShape, "backward needs a 1x1 loss");
  if (!requires_grad(loss)) return;
  nodes_[static_cast<std::size_t>(loss.id())].grad = Matrix::Ones(1, 1);
  for (int i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.backward || node.grad.size() == 0) continue;
    node.backward(*this, node.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Matrix::Zero(value(v).rows(), value(v).cols());
  return n.grad;
}

void Tape::accumulate_param_grads(std::vector<Matrix>& grads) const {
  for (const Node& n : nodes_) {
    if (n.param_slot < 0 || n.grad.size() == 0) continue;
    grads[static_cast<std::size_t>(n.param_slot)] += n.grad;
  }
}

// ---------------------------------------------------------------------------

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    fail(ErrorKind::kShape, std::string("autodiff ") + op + ": incompatible shapes " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " and " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

bool same_shape(const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols(); }

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.cols() == bv.rows(), "matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate_expr(b, t.value(a).transpose() * g);
  });
}

Var matmul_bt(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.cols() == bv.cols(), "matmul_bt", av, bv);
  Matrix out(av.rows(), bv.rows());
  out.noalias() = av * bv.transpose();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate_expr(b, g.transpose() * t.value(a));
  });
}

Var add(Var a, Var b) {
  require(same_shape(a.value(), b.value()), "add", a.value(), b.value());
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require(same_shape(a.value(), b.value()), "sub", a.value(), b.value());
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(b, -g);
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.value(), row.value());
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate_expr(row, g.colwise().sum());
  });
}

Var hadamard(Var a, Var b) {
  require(same_shape(a.value(), b.value()), "hadamard", a.value(), b.value());
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate_expr(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double s) {
  return a.tape().record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * s); });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  Matrix saved = out;
  return a.tape().record(std::move(out), {a}, [a, saved = std::move(saved)](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, g.cwiseProduct(saved));
  });
}

Var gelu(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  Matrix deriv(x.rows(), x.cols());
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    out.data()[i] = v * cdf;
    deriv.data()[i] = cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
  }
  return a.tape().record(std::move(out), {a}, [a, deriv = std::move(deriv)](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, g.cwiseProduct(deriv));
  });
}

Var clamp(Var a, double lo, double hi) {
  const Matrix& x = a.value();
  Matrix out = x.cwiseMax(lo).cwiseMin(hi);
  Matrix pass = ((x.array() >= lo) && (x.array() <= hi)).cast<double>().matrix();
  return a.tape().record(std::move(out), {a}, [a, pass = std::move(pass)](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, g.cwiseProduct(pass));
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape().record(std::move(out), {a}, [a, rows, cols](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = x.value();
  require(gamma.rows() == 1 && gamma.cols() == xv.cols() && beta.rows() == 1 && beta.cols() == xv.cols(),
          "layer_norm", xv, gamma.value());
  const auto n = xv.rows();
  const auto c = xv.cols();
  Matrix xhat(n, c);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix& g) {
                           if (t.requires_grad(gamma)) t.accumulate_expr(gamma, g.cwiseProduct(xhat).colwise().sum());
                           if (t.requires_grad(beta)) t.accumulate_expr(beta, g.colwise().sum());
                           if (!t.requires_grad(x)) return;
                           const Matrix dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
                           Matrix dx(dxhat.rows(), dxhat.cols());
                           for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                             const double m1 = dxhat.row(r).mean();
                             const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                             dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                           }
                           t.accumulate(x, dx);
                         });
}

Var gather_rows(Var table, std::vector<int> index) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), tv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= tv.rows()) fail(ErrorKind::kShape, "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(index[i]);
  }
  return table.tape().record(std::move(out), {table}, [table, index = std::move(index)](Tape& t, const Matrix& g) {
    Matrix dt = Matrix::Zero(t.value(table).rows(), t.value(table).cols());
    for (std::size_t i = 0; i < index.size(); ++i) dt.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, dt);
  });
}

Var select_rows(Var a, std::vector<std::uint8_t> keep, Var token) {
  const Matrix& av = a.value();
  require(static_cast<Eigen::Index>(keep.size()) == av.rows() && token.rows() == 1 && token.cols() == av.cols(),
          "select_rows", av, token.value());
  Matrix out = av;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) out.row(static_cast<Eigen::Index>(i)) = token.value().row(0);
  }
  return a.tape().record(std::move(out), {a, token}, [a, token, keep = std::move(keep)](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) {
      Matrix da = g;
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) da.row(static_cast<Eigen::Index>(i)).setZero();
      }
      t.accumulate(a, da);
    }
    if (t.requires_grad(token)) {
      Matrix dtok = Matrix::Zero(1, g.cols());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) dtok.row(0) += g.row(static_cast<Eigen::Index>(i));
      }
      t.accumulate(token, dtok);
    }
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) fail(ErrorKind::kShape, "reshape: element count mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const auto r0 = a.rows(), c0 = a.cols();
  return a.tape().record(std::move(out), {a}, [a, r0, c0](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var attention(Var q, Var k, Var v, const AttentionLayout& layout) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  require(same_shape(qv, kv) && same_shape(qv, vv), "attention", qv, kv);
  const Eigen::Index n = qv.rows();
  const Eigen::Index d = qv.cols();
  const Eigen::Index block = layout.block;
  const int heads = layout.heads;
  if (block <= 0 || n % block != 0) fail(ErrorKind::kShape, "attention: rows not divisible by block");
  if (heads <= 0 || d % heads != 0) fail(ErrorKind::kShape, "attention: width not divisible by heads");
  if (!layout.key_visible.empty() && static_cast<Eigen::Index>(layout.key_visible.size()) != n) {
    fail(ErrorKind::kShape, "attention: key mask length mismatch");
  }
  const Eigen::Index dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index blocks = n / block;

  // Per block: which keys participate.
  std::vector<std::uint8_t> visible(static_cast<std::size_t>(n), 1);
  for (Eigen::Index b = 0; b < blocks && !layout.key_visible.empty(); ++b) {
    bool any = false;
    for (Eigen::Index j = 0; j < block; ++j) any = any || layout.key_visible[static_cast<std::size_t>(b * block + j)];
    if (!any) continue;
    for (Eigen::Index j = 0; j < block; ++j) {
      visible[static_cast<std::size_t>(b * block + j)] = layout.key_visible[static_cast<std::size_t>(b * block + j)];
    }
  }

  Matrix out = Matrix::Zero(n, d);
  std::vector<Matrix> probs(static_cast<std::size_t>(blocks * heads));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index r0 = b * block;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Matrix s = (qv.block(r0, c0, block, dh) * kv.block(r0, c0, block, dh).transpose()) * scale_factor;
      for (Eigen::Index i = 0; i < block; ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < block; ++j) {
          if (visible[static_cast<std::size_t>(r0 + j)]) top = std::max(top, s(i, j));
        }
        double total = 0.0;
        for (Eigen::Index j = 0; j < block; ++j) {
          const double e = visible[static_cast<std::size_t>(r0 + j)] ? std::exp(s(i, j) - top) : 0.0;
          s(i, j) = e;
          total += e;
        }
        s.row(i) /= total;
      }
      out.block(r0, c0, block, dh).noalias() = s * vv.block(r0, c0, block, dh);
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }

  return q.tape().record(
      std::move(out), {q, k, v},
      [q, k, v, probs = std::move(probs), block, heads, dh, blocks, scale_factor](Tape& t, const Matrix& g) {
        const Matrix& qv = t.value(q);
        const Matrix& kv = t.value(k);
        const Matrix& vv = t.value(v);
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dk = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dv = Matrix::Zero(qv.rows(), qv.cols());
        for (Eigen::Index b = 0; b < blocks; ++b) {
          const Eigen::Index r0 = b * block;
          for (int h = 0; h < heads; ++h) {
            const Eigen::Index c0 = h * dh;
            const Matrix& p = probs[static_cast<std::size_t>(b * heads + h)];
            const auto go = g.block(r0, c0, block, dh);
            dv.block(r0, c0, block, dh).noalias() = p.transpose() * go;
            Matrix dp = go * vv.block(r0, c0, block, dh).transpose();
            const Vector row_dot = p.cwiseProduct(dp).rowwise().sum();
            Matrix ds = p.cwiseProduct(dp.colwise() - row_dot) * scale_factor;
            dq.block(r0, c0, block, dh).noalias() = ds * kv.block(r0, c0, block, dh);
            dk.block(r0, c0, block, dh).noalias() = ds.transpose() * qv.block(r0, c0, block, dh);
          }
        }
        t.accumulate(q, dq);
        t.accumulate(k, dk);
        t.accumulate(v, dv);
      });
}

namespace {

Matrix expand_weights(const Matrix& weights, Eigen::Index width) {
  const Eigen::Index groups = weights.cols();
  const Eigen::Index per = width / groups;
  Matrix w(weights.rows(), width);
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    for (Eigen::Index gi = 0; gi < groups; ++gi) w.block(r, gi * per, 1, per).setConstant(weights(r, gi));
  }
  return w;
}

void check_loss_shapes(const Matrix& pred, const Matrix& target, const Matrix& weights) {
  require(same_shape(pred, target), "loss", pred, target);
  require(weights.rows() == pred.rows() && weights.cols() > 0 && pred.cols() % weights.cols() == 0, "loss weights",
          pred, weights);
}

}  // namespace

Var weighted_squared_error(Var pred, const Matrix& target, const Matrix& weights) {
  check_loss_shapes(pred.value(), target, weights);
  const Matrix w = expand_weights(weights, pred.cols());
  Matrix diff = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = w.cwiseProduct(diff.cwiseAbs2()).sum();
  Matrix grad = 2.0 * w.cwiseProduct(diff);
  return pred.tape().record(std::move(out), {pred}, [pred, grad = std::move(grad)](Tape& t, const Matrix& g) {
    t.accumulate_expr(pred, grad * g(0, 0));
  });
}

Var weighted_abs_error(Var pred, const Matrix& target, const Matrix& weights) {
  check_loss_shapes(pred.value(), target, weights);
  const Matrix w = expand_weights(weights, pred.cols());
  Matrix diff = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = w.cwiseProduct(diff.cwiseAbs()).sum();
  Matrix sign = diff.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
  Matrix grad = w.cwiseProduct(sign);
  return pred.tape().record(std::move(out), {pred}, [pred, grad = std::move(grad)](Tape& t, const Matrix& g) {
    t.accumulate_expr(pred, grad * g(0, 0));
  });
}

Var kl_standard_normal(Var mu, Var log_var, double lo, double hi) {
  require(same_shape(mu.value(), log_var.value()), "kl", mu.value(), log_var.value());
  const Matrix& m = mu.value();
  const Matrix& lv = log_var.value();
  const Matrix lvc = lv.cwiseMax(lo).cwiseMin(hi);
  const Matrix var = lvc.array().exp().matrix();
  Matrix out(1, 1);
  out(0, 0) = -0.5 * (1.0 + lvc.array() - m.array().square() - var.array()).sum();
  Matrix pass = ((lv.array() >= lo) && (lv.array() <= hi)).cast<double>().matrix();
  Matrix dlv = (-0.5 * (1.0 - var.array()) * pass.array()).matrix();
  return mu.tape().record(std::move(out), {mu, log_var},
                          [mu, log_var, dlv = std::move(dlv)](Tape& t, const Matrix& g) {
                            if (t.requires_grad(mu)) t.accumulate_expr(mu, t.value(mu) * g(0, 0));
                            if (t.requires_grad(log_var)) t.accumulate_expr(log_var, dlv * g(0, 0));
                          });
}

}  // namespace skf::ad
