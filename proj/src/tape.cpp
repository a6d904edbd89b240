#include "miaa/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace miaa::num {

namespace {

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw std::runtime_error(std::string("numerics: non-finite result in ") + op);
}

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw std::runtime_error(std::string("numerics: operands of ") + op +
                             " belong to different tapes");
}

// y += a * b for matrices, ikj order.
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& y, bool at, bool bt) {
  const std::int64_t p = at ? a.cols() : a.rows();
  const std::int64_t q = at ? a.rows() : a.cols();
  const std::int64_t r = bt ? b.rows() : b.cols();
  for (std::int64_t i = 0; i < p; ++i) {
    for (std::int64_t k = 0; k < q; ++k) {
      const double av = at ? a.at(k, i) : a.at(i, k);
      if (av == 0.0) continue;
      double* yout = &y.at(i, 0);
      if (!bt) {
        const double* brow = &b.data[static_cast<std::size_t>(k * b.cols())];
        for (std::int64_t j = 0; j < r; ++j) yout[j] += av * brow[j];
      } else {
        for (std::int64_t j = 0; j < r; ++j) yout[j] += av * b.at(j, k);
      }
    }
  }
}

}  // namespace

Var make_op(Tape* t, Tensor value, std::function<void(Tape&, int)> back);

Tensor& Tape::grad(int id) {
  auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.data.empty()) g = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape);
  return g;
}

Var Tape::leaf(Tensor value) {
  check_finite(value, "leaf");
  nodes_.push_back(Node{std::move(value), nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(ParameterStore& store, const std::string& name) {
  for (const auto& b : bindings_)
    if (b.store == &store && b.name == name) return Var(this, b.node);
  Var v = leaf(store.value(name));
  bindings_.push_back(Binding{&store, name, v.id()});
  return v;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::runtime_error("numerics: loss from another tape");
  if (loss.value().size() != 1)
    throw std::runtime_error("numerics: backward requires a scalar loss, got shape " +
                             loss.value().shape_str());
  grads_.assign(nodes_.size(), Tensor{});
  grad(loss.id()).at(0) = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.back) continue;
    if (!has_grad(i)) continue;
    node.back(*this, i);
  }
  for (const auto& b : bindings_) {
    if (!has_grad(b.node)) continue;
    Tensor& g = b.store->grad(b.name);
    const Tensor& src = grads_[static_cast<std::size_t>(b.node)];
    for (std::int64_t k = 0; k < src.size(); ++k) g.at(k) += src.at(k);
  }
  grads_.clear();
}

Var make_op(Tape* t, Tensor value, std::function<void(Tape&, int)> back) {
  t->nodes_.push_back(Tape::Node{std::move(value), std::move(back)});
  return Var(t, static_cast<int>(t->nodes_.size()) - 1);
}

// ---- structural ops ----------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.cols() != bv.rows())
    throw std::runtime_error("numerics: matmul shape mismatch " + av.shape_str() + " x " +
                             bv.shape_str());
  Tensor out({av.rows(), bv.cols()});
  matmul_acc(av, bv, out, false, false);
  check_finite(out, "matmul");
  const int ia = a.id(), ib = b.id();
  return make_op(a.tape(), std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    matmul_acc(g, t.value(ib), t.grad_ref(ia), false, true);   // dA += G Bᵀ
    matmul_acc(t.value(ia), g, t.grad_ref(ib), true, false);   // dB += Aᵀ G
  });
}

Var transpose(const Var& a) {
  const Tensor& av = a.value();
  if (av.shape.size() != 2) throw std::runtime_error("numerics: transpose needs a matrix");
  Tensor out({av.cols(), av.rows()});
  for (std::int64_t i = 0; i < av.rows(); ++i)
    for (std::int64_t j = 0; j < av.cols(); ++j) out.at(j, i) = av.at(i, j);
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < ga.rows(); ++i)
      for (std::int64_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var reshape(const Var& a, std::vector<std::int64_t> shape) {
  const Tensor& av = a.value();
  if (Tensor::count(shape) != av.size())
    throw std::runtime_error("numerics: reshape element count mismatch");
  Tensor out(std::move(shape), av.data);
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) += g.at(k);
  });
}

Var concat1d(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::runtime_error("numerics: concat of nothing");
  std::vector<double> data;
  std::vector<int> ids;
  std::vector<std::int64_t> sizes;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    data.insert(data.end(), v.data.begin(), v.data.end());
    ids.push_back(p.id());
    sizes.push_back(v.size());
  }
  Tensor out = Tensor::vector(std::move(data));
  return make_op(parts[0].tape(), std::move(out),
                 [ids, sizes](Tape& t, int self) {
                   const Tensor& g = t.grad_ref(self);
                   std::int64_t off = 0;
                   for (std::size_t p = 0; p < ids.size(); ++p) {
                     Tensor& gp = t.grad_ref(ids[p]);
                     for (std::int64_t k = 0; k < sizes[p]; ++k) gp.at(k) += g.at(off + k);
                     off += sizes[p];
                   }
                 });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::runtime_error("numerics: stack of nothing");
  const std::int64_t cols = rows[0].value().size();
  Tensor out({static_cast<std::int64_t>(rows.size()), cols});
  std::vector<int> ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = rows[r].value();
    if (v.size() != cols) throw std::runtime_error("numerics: ragged stack_rows");
    for (std::int64_t k = 0; k < cols; ++k) out.at(static_cast<std::int64_t>(r), k) = v.at(k);
    ids.push_back(rows[r].id());
  }
  return make_op(rows[0].tape(), std::move(out), [ids, cols](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      Tensor& gr = t.grad_ref(ids[r]);
      for (std::int64_t k = 0; k < cols; ++k)
        gr.at(k) += g.at(static_cast<std::int64_t>(r), k);
    }
  });
}

Var embed_row(const Var& table, std::int64_t row) {
  const Tensor& tv = table.value();
  if (tv.shape.size() != 2 || row < 0 || row >= tv.rows())
    throw std::runtime_error("numerics: embed_row index out of range");
  const std::int64_t c = tv.cols();
  Tensor out({c});
  for (std::int64_t k = 0; k < c; ++k) out.at(k) = tv.at(row, k);
  const int it = table.id();
  return make_op(table.tape(), std::move(out), [it, row, c](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gt = t.grad_ref(it);
    for (std::int64_t k = 0; k < c; ++k) gt.at(row, k) += g.at(k);
  });
}

// ---- elementwise -------------------------------------------------------

namespace {

Var binary_same_shape(const Var& a, const Var& b, const char* op,
                      double (*fwd)(double, double),
                      void (*bwd)(double ga_in, double av, double bv, double& ga,
                                  double& gb)) {
  require_same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv))
    throw std::runtime_error(std::string("numerics: ") + op + " shape mismatch " +
                             av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = fwd(av.at(k), bv.at(k));
  check_finite(out, op);
  const int ia = a.id(), ib = b.id();
  return make_op(a.tape(), std::move(out), [ia, ib, bwd](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor& ga = t.grad_ref(ia);
    Tensor& gb = t.grad_ref(ib);
    for (std::int64_t k = 0; k < g.size(); ++k)
      bwd(g.at(k), av.at(k), bv.at(k), ga.at(k), gb.at(k));
  });
}

Var unary(const Var& a, const char* op, double (*fwd)(double),
          double (*dydx)(double x, double y)) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = fwd(av.at(k));
  check_finite(out, op);
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia, dydx](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) += g.at(k) * dydx(x.at(k), y.at(k));
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double, double& ga, double& gb) {
        ga += g;
        gb += g;
      });
}

Var sub(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double, double& ga, double& gb) {
        ga += g;
        gb -= g;
      });
}

Var mul(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& ga, double& gb) {
        ga += g * y;
        gb += g * x;
      });
}

Var div(const Var& a, const Var& b) {
  return binary_same_shape(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double x, double y, double& ga, double& gb) {
        ga += g / y;
        gb -= g * x / (y * y);
      });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = av.at(k) * c;
  check_finite(out, "scale");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia, c](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) += g.at(k) * c;
  });
}

Var add_const(const Var& a, double c) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = av.at(k) + c;
  check_finite(out, "add_const");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) += g.at(k);
  });
}

Var sub_from_const(double c, const Var& a) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = c - av.at(k);
  check_finite(out, "sub_from_const");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) -= g.at(k);
  });
}

Var mul_const_t(const Var& a, const Tensor& c) {
  const Tensor& av = a.value();
  if (!av.same_shape(c))
    throw std::runtime_error("numerics: mul_const_t shape mismatch " + av.shape_str() +
                             " vs " + c.shape_str());
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = av.at(k) * c.at(k);
  check_finite(out, "mul_const_t");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia, c](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) += g.at(k) * c.at(k);
  });
}

Var add_const_t(const Var& a, const Tensor& c) {
  const Tensor& av = a.value();
  if (!av.same_shape(c))
    throw std::runtime_error("numerics: add_const_t shape mismatch " + av.shape_str() +
                             " vs " + c.shape_str());
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = av.at(k) + c.at(k);
  check_finite(out, "add_const_t");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k) ga.at(k) += g.at(k);
  });
}

Var relu(const Var& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid",
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      a, "softplus",
      [](double x) {
        if (x > 30.0) return x;
        if (x < -30.0) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var log_op(const Var& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var clamp(const Var& a, double lo, double hi) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::int64_t k = 0; k < av.size(); ++k) out.at(k) = std::min(hi, std::max(lo, av.at(k)));
  check_finite(out, "clamp");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia, lo, hi](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < g.size(); ++k)
      if (x.at(k) > lo && x.at(k) < hi) ga.at(k) += g.at(k);
  });
}

// ---- reductions & softmax ----------------------------------------------

Var sum(const Var& a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data) s += v;
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  const int ia = a.id();
  return make_op(a.tape(), std::move(out), [ia](Tape& t, int self) {
    const double g = t.grad_ref(self).at(0);
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t k = 0; k < ga.size(); ++k) ga.at(k) += g;
  });
}

Var index1d(const Var& v, std::int64_t i) {
  const Tensor& vv = v.value();
  if (vv.shape.size() != 1 || i < 0 || i >= vv.size())
    throw std::runtime_error("numerics: index1d out of range");
  Tensor out = Tensor::scalar(vv.at(i));
  const int iv = v.id();
  return make_op(v.tape(), std::move(out), [iv, i](Tape& t, int self) {
    t.grad_ref(iv).at(i) += t.grad_ref(self).at(0);
  });
}

namespace {

void softmax_kernel(const double* x, double* y, std::int64_t n, double inv_tau) {
  double mx = x[0] * inv_tau;
  for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, x[k] * inv_tau);
  double z = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    y[k] = std::exp(x[k] * inv_tau - mx);
    z += y[k];
  }
  for (std::int64_t k = 0; k < n; ++k) y[k] /= z;
}

}  // namespace

std::vector<double> softmax_values(const std::vector<double>& x, double temperature) {
  if (temperature <= 0.0) throw std::runtime_error("numerics: softmax temperature must be > 0");
  if (x.empty()) throw std::runtime_error("numerics: softmax of empty vector");
  std::vector<double> y(x.size());
  softmax_kernel(x.data(), y.data(), static_cast<std::int64_t>(x.size()), 1.0 / temperature);
  return y;
}

Var softmax1d(const Var& x, double temperature) {
  if (temperature <= 0.0) throw std::runtime_error("numerics: softmax temperature must be > 0");
  const Tensor& xv = x.value();
  if (xv.shape.size() != 1) throw std::runtime_error("numerics: softmax1d needs a vector");
  Tensor out(xv.shape);
  const double inv_tau = 1.0 / temperature;
  softmax_kernel(xv.data.data(), out.data.data(), xv.size(), inv_tau);
  check_finite(out, "softmax");
  const int ix = x.id();
  return make_op(x.tape(), std::move(out), [ix, inv_tau](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_ref(ix);
    double dot = 0.0;
    for (std::int64_t k = 0; k < y.size(); ++k) dot += g.at(k) * y.at(k);
    for (std::int64_t k = 0; k < y.size(); ++k)
      gx.at(k) += inv_tau * y.at(k) * (g.at(k) - dot);
  });
}

Var softmax_rows(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.shape.size() != 2) throw std::runtime_error("numerics: softmax_rows needs a matrix");
  Tensor out(xv.shape);
  for (std::int64_t i = 0; i < xv.rows(); ++i)
    softmax_kernel(&xv.data[static_cast<std::size_t>(i * xv.cols())],
                   &out.data[static_cast<std::size_t>(i * xv.cols())], xv.cols(), 1.0);
  check_finite(out, "softmax_rows");
  const int ix = x.id();
  return make_op(x.tape(), std::move(out), [ix](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_ref(ix);
    for (std::int64_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::int64_t j = 0; j < y.cols(); ++j)
        gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var add_rowvec(const Var& mat, const Var& vec) {
  require_same_tape(mat, vec, "add_rowvec");
  const Tensor& mv = mat.value();
  const Tensor& vv = vec.value();
  if (mv.shape.size() != 2 || vv.shape.size() != 1 || mv.cols() != vv.size())
    throw std::runtime_error("numerics: add_rowvec shape mismatch " + mv.shape_str() +
                             " vs " + vv.shape_str());
  Tensor out(mv.shape);
  for (std::int64_t i = 0; i < mv.rows(); ++i)
    for (std::int64_t j = 0; j < mv.cols(); ++j) out.at(i, j) = mv.at(i, j) + vv.at(j);
  check_finite(out, "add_rowvec");
  const int im = mat.id(), iv = vec.id();
  return make_op(mat.tape(), std::move(out), [im, iv](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gm = t.grad_ref(im);
    Tensor& gv = t.grad_ref(iv);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) {
        gm.at(i, j) += g.at(i, j);
        gv.at(j) += g.at(i, j);
      }
  });
}

Var attention(const Var& q, const Var& k, const Var& v) {
  const std::int64_t d = q.value().cols();
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  return matmul(softmax_rows(scores), v);
}

}  // namespace miaa::num
