// Copyright 2026 The wsnad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wsnad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "wsnad/kernels.hpp"
#include "wsnad/tensor_ops.hpp"

namespace wsnad::ad {

// ---------------------------------------------------------------------------
// Gradients / Tape

Mat& Gradients::slot(const Parameter* p) {
  auto it = grads_.find(p);
  if (it == grads_.end()) it = grads_.emplace(p, Mat(p->value.rows(), p->value.cols())).first;
  return it->second;
}

const Mat* Gradients::find(const Parameter* p) const {
  auto it = grads_.find(p);
  return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::merge(const Gradients& other) {
  for (const auto& [p, g] : other.grads_) slot(p) += g;
}

void Gradients::scale(double s) {
  for (auto& [p, g] : grads_) g *= s;
}

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::push(Mat value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && recording_;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Mat value) {
  Var v = push(std::move(value), true, nullptr);
  return v;
}

Var Tape::param(const Parameter& p) {
  Var v = push(p.value, p.trainable, nullptr);
  if (nodes_.back().needs_grad) nodes_.back().param = &p;
  return v;
}

Mat& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Mat(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat Tape::grad_of(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Mat(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& out, Gradients* grads) {
  if (out.rows() != 1 || out.cols() != 1)
    fail(ErrorKind::shape, "backward() without seed needs a scalar output, got " + out.value().shape_str());
  backward(out, Mat(1, 1, 1.0), grads);
}

void Tape::backward(const Var& out, const Mat& seed, Gradients* grads) {
  if (!seed.same_shape(out.value()))
    fail(ErrorKind::shape, "backward seed " + seed.shape_str() + " vs output " + out.value().shape_str());
  for (Node& n : nodes_) n.grad = Mat();
  if (!nodes_[out.id()].needs_grad) return;
  nodes_[out.id()].grad = seed;
  for (std::size_t id = out.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.back) n.back(*this, id);
    if (n.param != nullptr && grads != nullptr) grads->slot(n.param) += n.grad;
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

bool any_needs(std::initializer_list<const Var*> vs) {
  for (const Var* v : vs)
    if (v->tape().needs_grad(*v)) return true;
  return false;
}

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) fail(ErrorKind::contract, "operands live on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    fail(ErrorKind::shape, std::string(op) + ": " + a.value().shape_str() + " vs " + b.value().shape_str());
}

// Elementwise op where dy/dx can be expressed through x and y.
template <class Fwd, class Deriv>
Var elementwise(const Var& x, Fwd fwd, Deriv deriv) {
  const Mat& xv = x.value();
  Mat y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, deriv](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& xv = t.value(xi);
    const Mat& yv = t.value(self);
    Mat& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  Mat c = wsnad::matmul(a.value(), b.value());
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(c), any_needs({&a, &b}), [ai, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& av = t.value(ai);
    const Mat& bv = t.value(bi);
    const auto& k = kernels::active();
    if (t.needs_grad(ai)) k.gemm_nt(av.rows(), av.cols(), g.cols(), g.data(), bv.data(), t.grad(ai).data());
    if (t.needs_grad(bi)) k.gemm_tn(bv.rows(), bv.cols(), av.rows(), av.data(), g.data(), t.grad(bi).data());
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  same_tape(a, b);
  Mat c = wsnad::matmul_nt(a.value(), b.value());
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(c), any_needs({&a, &b}), [ai, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);  // m×n
    const Mat& av = t.value(ai);  // m×k
    const Mat& bv = t.value(bi);  // n×k
    const auto& k = kernels::active();
    if (t.needs_grad(ai)) k.gemm(av.rows(), av.cols(), bv.rows(), g.data(), bv.data(), t.grad(ai).data());
    if (t.needs_grad(bi)) k.gemm_tn(bv.rows(), bv.cols(), av.rows(), g.data(), av.data(), t.grad(bi).data());
  });
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b);
  check_same_shape(a, b, "add");
  Mat c = a.value();
  c += b.value();
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(c), any_needs({&a, &b}), [ai, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(bi)) t.grad(bi) += g;
  });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b);
  check_same_shape(a, b, "sub");
  Mat c = a.value();
  c -= b.value();
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(c), any_needs({&a, &b}), [ai, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(bi)) t.grad(bi) -= g;
  });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b);
  check_same_shape(a, b, "mul");
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Mat c(av.rows(), av.cols());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(c), any_needs({&a, &b}), [ai, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& av = t.value(ai);
    const Mat& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      Mat& ga = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(bi)) {
      Mat& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Mat c = a.value();
  c *= s;
  const std::size_t ai = a.id();
  return a.tape().push(std::move(c), a.tape().needs_grad(a), [ai, s](Tape& t, std::size_t self) {
    kernels::active().axpy(t.grad(self).size(), s, t.grad(self).data(), t.grad(ai).data());
  });
}

Var add_scalar(const Var& a, double s) {
  Mat c = a.value();
  for (double& v : c.storage()) v += s;
  const std::size_t ai = a.id();
  return a.tape().push(std::move(c), a.tape().needs_grad(a),
                       [ai](Tape& t, std::size_t self) { t.grad(ai) += t.grad(self); });
}

Var add_row(const Var& x, const Var& b) {
  same_tape(x, b);
  const Mat& xv = x.value();
  const Mat& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    fail(ErrorKind::shape, "add_row: " + xv.shape_str() + " + " + bv.shape_str());
  Mat y = xv;
  for (std::size_t r = 0; r < y.rows(); ++r) kernels::active().axpy(y.cols(), 1.0, bv.data(), y.data() + r * y.cols());
  const std::size_t xi = x.id(), bi = b.id();
  return x.tape().push(std::move(y), any_needs({&x, &b}), [xi, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(xi)) t.grad(xi) += g;
    if (t.needs_grad(bi)) {
      Mat& gb = t.grad(bi);
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::active().axpy(g.cols(), 1.0, g.data() + r * g.cols(), gb.data());
    }
  });
}

Var mul_row(const Var& x, const Var& gain) {
  same_tape(x, gain);
  const Mat& xv = x.value();
  const Mat& gv = gain.value();
  if (gv.rows() != 1 || gv.cols() != xv.cols())
    fail(ErrorKind::shape, "mul_row: " + xv.shape_str() + " ⊙ " + gv.shape_str());
  Mat y(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) = xv(r, c) * gv[c];
  const std::size_t xi = x.id(), gi = gain.id();
  return x.tape().push(std::move(y), any_needs({&x, &gain}), [xi, gi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& xv = t.value(xi);
    const Mat& gv = t.value(gi);
    if (t.needs_grad(xi)) {
      Mat& gx = t.grad(xi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * gv[c];
    }
    if (t.needs_grad(gi)) {
      Mat& gg = t.grad(gi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gg[c] += g(r, c) * xv(r, c);
    }
  });
}

Var mul_col(const Var& x, const Var& col) {
  same_tape(x, col);
  const Mat& xv = x.value();
  const Mat& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows())
    fail(ErrorKind::shape, "mul_col: " + xv.shape_str() + " ⊙ " + cv.shape_str());
  Mat y(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) = xv(r, c) * cv[r];
  const std::size_t xi = x.id(), ci = col.id();
  return x.tape().push(std::move(y), any_needs({&x, &col}), [xi, ci](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& xv = t.value(xi);
    const Mat& cv = t.value(ci);
    if (t.needs_grad(xi)) {
      Mat& gx = t.grad(xi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * cv[r];
    }
    if (t.needs_grad(ci)) {
      Mat& gc = t.grad(ci);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gc[r] += g(r, c) * xv(r, c);
    }
  });
}

Var mul_const(const Var& x, const Mat& c) {
  const Mat& xv = x.value();
  if (!xv.same_shape(c)) fail(ErrorKind::shape, "mul_const: " + xv.shape_str() + " ⊙ " + c.shape_str());
  Mat y(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * c[i];
  const std::size_t xi = x.id();
  auto cc = std::make_shared<Mat>(c);
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, cc](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*cc)[i];
  });
}

// ---------------------------------------------------------------------------
// activations

Var relu(const Var& x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var elu(const Var& x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return elementwise(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& x) {
  return elementwise(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& x) {
  return elementwise(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return elementwise(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
  return elementwise(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// structure

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_cols of nothing");
  Tape& tape = parts[0].tape();
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool needs = false;
  std::vector<std::size_t> ids, offs;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) fail(ErrorKind::contract, "concat_cols across tapes");
    if (p.rows() != rows) fail(ErrorKind::shape, "concat_cols row mismatch: " + p.value().shape_str());
    ids.push_back(p.id());
    offs.push_back(cols);
    cols += p.cols();
    needs = needs || tape.needs_grad(p);
  }
  Mat y(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Mat& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.data() + r * v.cols(), v.data() + (r + 1) * v.cols(), y.data() + r * cols + offs[k]);
  }
  return tape.push(std::move(y), needs, [ids, offs](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Mat& gp = t.grad(ids[k]);
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, offs[k] + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_rows of nothing");
  Tape& tape = parts[0].tape();
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool needs = false;
  std::vector<std::size_t> ids, offs;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) fail(ErrorKind::contract, "concat_rows across tapes");
    if (p.cols() != cols) fail(ErrorKind::shape, "concat_rows column mismatch: " + p.value().shape_str());
    ids.push_back(p.id());
    offs.push_back(rows);
    rows += p.rows();
    needs = needs || tape.needs_grad(p);
  }
  Mat y(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Mat& v = parts[k].value();
    std::copy(v.storage().begin(), v.storage().end(), y.data() + offs[k] * cols);
  }
  return tape.push(std::move(y), needs, [ids, offs](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Mat& gp = t.grad(ids[k]);
      const double* src = g.data() + offs[k] * g.cols();
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
    }
  });
}

Var slice_cols(const Var& x, std::size_t c0, std::size_t c1) {
  Mat y = x.value().cols_slice(c0, c1);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, c0](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c0 + c) += g(r, c);
  });
}

Var slice_rows(const Var& x, std::size_t r0, std::size_t r1) {
  Mat y = x.value().rows_slice(r0, r1);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, r0](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    double* dst = gx.data() + r0 * gx.cols();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  const Mat& xv = x.value();
  Mat y(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) fail(ErrorKind::shape, "gather_rows index out of range");
    std::copy(xv.data() + rows[i] * xv.cols(), xv.data() + (rows[i] + 1) * xv.cols(), y.data() + i * xv.cols());
  }
  const std::size_t xi = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, idx](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t i = 0; i < idx.size(); ++i)
      kernels::active().axpy(g.cols(), 1.0, g.data() + i * g.cols(), gx.data() + idx[i] * gx.cols());
  });
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.value().size())
    fail(ErrorKind::shape, "reshape " + x.value().shape_str() + " to " + std::to_string(rows) + "x" +
                               std::to_string(cols));
  Mat y(rows, cols, x.value().storage());
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var transpose(const Var& x) {
  const std::size_t xi = x.id();
  return x.tape().push(x.value().transposed(), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    t.grad(xi) += t.grad(self).transposed();
  });
}

Var block_diag(std::span<const Var> blocks) {
  if (blocks.empty()) fail(ErrorKind::shape, "block_diag of nothing");
  Tape& tape = blocks[0].tape();
  std::size_t rows = 0, cols = 0;
  bool needs = false;
  std::vector<std::size_t> ids, roff, coff;
  for (const Var& b : blocks) {
    ids.push_back(b.id());
    roff.push_back(rows);
    coff.push_back(cols);
    rows += b.rows();
    cols += b.cols();
    needs = needs || tape.needs_grad(b);
  }
  Mat y(rows, cols);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Mat& v = blocks[k].value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) y(roff[k] + r, coff[k] + c) = v(r, c);
  }
  return tape.push(std::move(y), needs, [ids, roff, coff](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Mat& gb = t.grad(ids[k]);
      for (std::size_t r = 0; r < gb.rows(); ++r)
        for (std::size_t c = 0; c < gb.cols(); ++c) gb(r, c) += g(roff[k] + r, coff[k] + c);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().storage()) s += v;
  const std::size_t xi = x.id();
  return x.tape().push(Mat(1, 1, s), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(xi).storage()) v += g;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mean_blocks(const Var& x, std::size_t block) {
  const Mat& xv = x.value();
  if (block == 0 || xv.rows() % block != 0)
    fail(ErrorKind::shape, "mean_blocks: " + std::to_string(xv.rows()) + " rows not divisible by " +
                               std::to_string(block));
  const std::size_t n = xv.rows() / block;
  const double inv = 1.0 / static_cast<double>(block);
  Mat y(n, xv.cols());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t r = 0; r < block; ++r)
      kernels::active().axpy(xv.cols(), inv, xv.data() + (b * block + r) * xv.cols(), y.data() + b * xv.cols());
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, block, inv](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t b = 0; b < g.rows(); ++b)
      for (std::size_t r = 0; r < block; ++r)
        kernels::active().axpy(g.cols(), inv, g.data() + b * g.cols(), gx.data() + (b * block + r) * gx.cols());
  });
}

Var sum_rows(const Var& x) {
  const Mat& xv = x.value();
  Mat y(1, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) y[c] += xv(r, c);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[c];
  });
}

Var sum_cols(const Var& x) {
  const Mat& xv = x.value();
  Mat y(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) y[r] += xv(r, c);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat& gx = t.grad(xi);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[r];
  });
}

// ---------------------------------------------------------------------------
// normalisation / probability

Var group_norm(const Var& x, std::size_t groups, double eps) {
  Mat y = x.value();
  auto inv = std::make_shared<std::vector<double>>();
  group_norm_rows(y, groups, eps, inv.get());
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, groups, inv](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& y = t.value(self);
    Mat& gx = t.grad(xi);
    const std::size_t gw = g.cols() / groups;
    const double n = static_cast<double>(gw);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t k = 0; k < groups; ++k) {
        const std::size_t off = r * g.cols() + k * gw;
        double mg = 0.0, mgy = 0.0;
        for (std::size_t i = 0; i < gw; ++i) {
          mg += g[off + i];
          mgy += g[off + i] * y[off + i];
        }
        mg /= n;
        mgy /= n;
        const double s = (*inv)[r * groups + k];
        for (std::size_t i = 0; i < gw; ++i) gx[off + i] += s * (g[off + i] - mg - y[off + i] * mgy);
      }
    }
  });
}

namespace {

void softmax_row(const double* x, double* y, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= s;
}

}  // namespace

Var softmax_rows(const Var& x) {
  const Mat& xv = x.value();
  Mat y(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) softmax_row(xv.data() + r * xv.cols(), y.data() + r * xv.cols(), xv.cols());
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& y = t.value(self);
    Mat& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dotgy = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dotgy += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dotgy);
    }
  });
}

Var log_softmax_rows(const Var& x) {
  const Mat& xv = x.value();
  Mat y(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < xv.cols(); ++c) m = std::max(m, xv(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) s += std::exp(xv(r, c) - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) = xv(r, c) - lse;
  }
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& y = t.value(self);
    Mat& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) gs += g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
    }
  });
}

Var masked_softmax_rows(const Var& x, const Mat& mask) {
  const Mat& xv = x.value();
  if (!xv.same_shape(mask)) fail(ErrorKind::shape, "masked softmax: mask " + mask.shape_str() + " vs " + xv.shape_str());
  Mat y(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < xv.cols(); ++c)
      if (mask(r, c) != 0.0) m = std::max(m, xv(r, c));
    if (!std::isfinite(m)) fail(ErrorKind::contract, "masked softmax: row " + std::to_string(r) + " fully masked");
    double s = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      y(r, c) = mask(r, c) != 0.0 ? std::exp(xv(r, c) - m) : 0.0;
      s += y(r, c);
    }
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) /= s;
  }
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& y = t.value(self);
    Mat& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dotgy = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dotgy += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dotgy);
    }
  });
}

// ---------------------------------------------------------------------------
// graph helpers

Var outer_add(const Var& a, const Var& b) {
  same_tape(a, b);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != 1 || bv.cols() != 1)
    fail(ErrorKind::shape, "outer_add expects column vectors, got " + av.shape_str() + ", " + bv.shape_str());
  Mat y(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j) y(i, j) = av[i] + bv[j];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(std::move(y), any_needs({&a, &b}), [ai, bi](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ai)) {
      Mat& ga = t.grad(ai);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga[i] += g(i, j);
    }
    if (t.needs_grad(bi)) {
      Mat& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

Var pair_sqdiff(const Var& x) {
  const Mat& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  Mat y(n * n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = xv(i, c) - xv(j, c);
        y(i * n + j, c) = diff * diff;
      }
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x), [xi, n, d](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& xv = t.value(xi);
    Mat& gx = t.grad(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) {
          const double v = 2.0 * (xv(i, c) - xv(j, c)) * g(i * n + j, c);
          gx(i, c) += v;
          gx(j, c) -= v;
        }
  });
}

// ---------------------------------------------------------------------------
// sequence kernels

Var rotary(const Var& x, std::size_t block, std::size_t head_dim, long pos0, bool conjugate, double base) {
  Mat y = x.value();
  rotary_inplace(y, block, head_dim, pos0, conjugate, base);
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), x.tape().needs_grad(x),
                       [xi, block, head_dim, pos0, conjugate, base](Tape& t, std::size_t self) {
                         // A rotation's adjoint is the rotation by the opposite angle.
                         Mat g = t.grad(self);
                         rotary_inplace(g, block, head_dim, pos0, !conjugate, base);
                         t.grad(xi) += g;
                       });
}

namespace {

// Copies rows [r0, r0+n) × cols [c0, c0+w) into a contiguous buffer.
void gather_block(const Mat& src, std::size_t r0, std::size_t n, std::size_t c0, std::size_t w, double* dst) {
  for (std::size_t r = 0; r < n; ++r)
    std::copy(src.data() + (r0 + r) * src.cols() + c0, src.data() + (r0 + r) * src.cols() + c0 + w, dst + r * w);
}

void scatter_add_block(Mat& dst, std::size_t r0, std::size_t n, std::size_t c0, std::size_t w, const double* src) {
  for (std::size_t r = 0; r < n; ++r) {
    double* d = dst.data() + (r0 + r) * dst.cols() + c0;
    for (std::size_t c = 0; c < w; ++c) d[c] += src[r * w + c];
  }
}

}  // namespace

Var retention(const Var& q, const Var& k, const Var& v, std::span<const double> gammas, std::size_t block) {
  same_tape(q, k);
  same_tape(q, v);
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  const std::size_t heads = gammas.size();
  if (heads == 0) fail(ErrorKind::config, "retention needs at least one head");
  if (!qv.same_shape(kv)) fail(ErrorKind::shape, "retention: Q " + qv.shape_str() + " vs K " + kv.shape_str());
  if (vv.rows() != qv.rows()) fail(ErrorKind::shape, "retention: V rows " + std::to_string(vv.rows()) + " vs " + std::to_string(qv.rows()));
  if (block == 0 || qv.rows() % block != 0) fail(ErrorKind::shape, "retention: rows not divisible by window");
  if (qv.cols() % heads != 0 || vv.cols() % heads != 0) fail(ErrorKind::shape, "retention: widths not divisible by head count");
  const std::size_t dq = qv.cols() / heads, dv = vv.cols() / heads;
  const std::size_t nblocks = qv.rows() / block;
  const auto& kt = kernels::active();

  auto masks = std::make_shared<std::vector<Mat>>();
  for (double g : gammas) masks->push_back(decay_mask(block, g));
  // Masked score matrices, kept for the backward pass.
  auto scores = std::make_shared<std::vector<Mat>>(nblocks * heads);

  Mat out(qv.rows(), vv.cols());
  std::vector<double> qb(block * dq), kb(block * dq), vb(block * dv), ob(block * dv);
  for (std::size_t b = 0; b < nblocks; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      gather_block(qv, b * block, block, h * dq, dq, qb.data());
      gather_block(kv, b * block, block, h * dq, dq, kb.data());
      gather_block(vv, b * block, block, h * dv, dv, vb.data());
      Mat& a = (*scores)[b * heads + h];
      a = Mat(block, block);
      kt.gemm_nt(block, block, dq, qb.data(), kb.data(), a.data());
      const Mat& dm = (*masks)[h];
      for (std::size_t i = 0; i < a.size(); ++i) a[i] *= dm[i];
      std::fill(ob.begin(), ob.end(), 0.0);
      kt.gemm(block, dv, block, a.data(), vb.data(), ob.data());
      scatter_add_block(out, b * block, block, h * dv, dv, ob.data());
    }
  }

  const std::size_t qi = q.id(), ki = k.id(), vi = v.id();
  return q.tape().push(std::move(out), any_needs({&q, &k, &v}),
                       [qi, ki, vi, heads, dq, dv, block, nblocks, masks, scores](Tape& t, std::size_t self) {
                         const auto& kt = kernels::active();
                         const Mat& g = t.grad(self);
                         const Mat& qv = t.value(qi);
                         const Mat& kv = t.value(ki);
                         const Mat& vv = t.value(vi);
                         const bool nq = t.needs_grad(qi), nk = t.needs_grad(ki), nv = t.needs_grad(vi);
                         std::vector<double> qb(block * dq), kb(block * dq), vb(block * dv), gb(block * dv);
                         std::vector<double> dqb(block * dq), dkb(block * dq), dvb(block * dv);
                         Mat da(block, block);
                         for (std::size_t b = 0; b < nblocks; ++b) {
                           for (std::size_t h = 0; h < heads; ++h) {
                             const Mat& a = (*scores)[b * heads + h];
                             gather_block(g, b * block, block, h * dv, dv, gb.data());
                             if (nv) {
                               std::fill(dvb.begin(), dvb.end(), 0.0);
                               kt.gemm_tn(block, dv, block, a.data(), gb.data(), dvb.data());
                               scatter_add_block(t.grad(vi), b * block, block, h * dv, dv, dvb.data());
                             }
                             if (!nq && !nk) continue;
                             gather_block(vv, b * block, block, h * dv, dv, vb.data());
                             da.fill(0.0);
                             kt.gemm_nt(block, block, dv, gb.data(), vb.data(), da.data());
                             const Mat& dm = (*masks)[h];
                             for (std::size_t i = 0; i < da.size(); ++i) da[i] *= dm[i];
                             if (nq) {
                               gather_block(kv, b * block, block, h * dq, dq, kb.data());
                               std::fill(dqb.begin(), dqb.end(), 0.0);
                               kt.gemm(block, dq, block, da.data(), kb.data(), dqb.data());
                               scatter_add_block(t.grad(qi), b * block, block, h * dq, dq, dqb.data());
                             }
                             if (nk) {
                               gather_block(qv, b * block, block, h * dq, dq, qb.data());
                               std::fill(dkb.begin(), dkb.end(), 0.0);
                               kt.gemm_tn(block, dq, block, da.data(), qb.data(), dkb.data());
                               scatter_add_block(t.grad(ki), b * block, block, h * dq, dq, dkb.data());
                             }
                           }
                         }
                       });
}

}  // namespace wsnad::ad
