#include "trace/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "trace/kernels.hpp"

namespace trace {

template <class Real>
Var Tape<Real>::constant(Tensor<Real> value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class Real>
Var Tape<Real>::parameter(const ModelParams<Real>& params, std::size_t index) {
  for (std::size_t i = 0; i < param_lookup_.size(); ++i) {
    if (param_lookup_[i].first == &params && param_lookup_[i].second == index) return Var{param_nodes_[i]};
  }
  Node n;
  n.ref = &params.value(index);
  n.params = &params;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_lookup_.emplace_back(&params, index);
  param_nodes_.push_back(id);
  return Var{id};
}

template <class Real>
const Tensor<Real>& Tape<Real>::value(Var v) const {
  require(v.valid() && v.id < nodes_.size(), ErrorCategory::kState, "invalid tape variable");
  const Node& n = nodes_[v.id];
  return n.ref ? *n.ref : n.owned;
}

template <class Real>
Tensor<Real>& Tape<Real>::grad(Var v) {
  require(v.valid() && v.id < nodes_.size(), ErrorCategory::kState, "invalid tape variable");
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const auto& val = n.ref ? *n.ref : n.owned;
    n.grad = Tensor<Real>(val.rows(), val.cols());
  }
  return n.grad;
}

template <class Real>
bool Tape<Real>::has_grad(Var v) const {
  return v.valid() && v.id < nodes_.size() && !nodes_[v.id].grad.empty();
}

template <class Real>
Var Tape<Real>::push(Tensor<Real> value, BackwardFn backward_fn) {
  const Var v = constant(std::move(value));
  if (record_ && backward_fn) {
    backward_fns_.resize(nodes_.size());
    backward_fns_[v.id] = std::move(backward_fn);
  }
  return v;
}

template <class Real>
void Tape<Real>::backward(Var loss, Real seed) {
  require(value(loss).size() == 1, ErrorCategory::kShapeMismatch, "scalar backward needs a 1x1 output");
  backward(loss, Tensor<Real>(1, 1, seed));
}

template <class Real>
void Tape<Real>::backward(Var output, const Tensor<Real>& seed) {
  require(record_, ErrorCategory::kState, "backward on a tape that does not record gradients");
  require(!backward_fns_.empty(), ErrorCategory::kState, "backward without a recorded forward pass");
  require(!backward_done_, ErrorCategory::kState, "backward already ran on this tape");
  require_same_shape(value(output), seed, "backward seed");
  grad(output) = seed;
  backward_done_ = true;
  const std::size_t last = std::min<std::size_t>(output.id + 1, backward_fns_.size());
  for (std::size_t i = last; i-- > 0;) {
    if (backward_fns_[i] && !nodes_[i].grad.empty()) backward_fns_[i](Var{static_cast<std::uint32_t>(i)});
  }
}

template <class Real>
void Tape<Real>::accumulate_param_grads(ModelParams<Real>& params, Real scale) const {
  for (std::uint32_t id : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.params != &params || n.grad.empty()) continue;
    kernels::axpy<Real>(n.grad.size(), scale, n.grad.data(), params.grad(n.param_index).data());
  }
}

namespace ag {
namespace {

template <class Real>
void add_into(Tensor<Real>& dst, const Tensor<Real>& src) {
  kernels::axpy<Real>(src.size(), Real(1), src.data(), dst.data());
}

template <class Real>
Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Tensor<Real> im2col(const Tensor<Real>& x, std::size_t k, std::size_t lout, int stride, long pad) {
  const std::size_t cin = x.rows();
  const long len = static_cast<long>(x.cols());
  Tensor<Real> cols(cin * k, lout);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const Real* src = x.data() + ci * x.cols();
    for (std::size_t kk = 0; kk < k; ++kk) {
      Real* dst = cols.data() + (ci * k + kk) * lout;
      for (std::size_t l = 0; l < lout; ++l) {
        const long pos = static_cast<long>(l) * stride + static_cast<long>(kk) - pad;
        dst[l] = (pos >= 0 && pos < len) ? src[pos] : Real(0);
      }
    }
  }
  return cols;
}

template <class Real>
void col2im_add(const Tensor<Real>& gcols, Tensor<Real>& gx, std::size_t k, std::size_t lout, int stride, long pad) {
  const std::size_t cin = gx.rows();
  const long len = static_cast<long>(gx.cols());
  for (std::size_t ci = 0; ci < cin; ++ci) {
    Real* dst = gx.data() + ci * gx.cols();
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Real* src = gcols.data() + (ci * k + kk) * lout;
      for (std::size_t l = 0; l < lout; ++l) {
        const long pos = static_cast<long>(l) * stride + static_cast<long>(kk) - pad;
        if (pos >= 0 && pos < len) dst[pos] += src[l];
      }
    }
  }
}

template <class Real, class F, class D>
Var unary(Tape<Real>& tape, Var x, F f, D dfdx_from_xy) {
  const auto& xv = tape.value(x);
  Tensor<Real> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape.push(std::move(out), [&tape, x, dfdx_from_xy](Var y) {
    const auto& xv = tape.value(x);
    const auto& yv = tape.value(y);
    const auto& gy = tape.grad(y);
    auto& gx = tape.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx_from_xy(xv[i], yv[i]);
  });
}

}  // namespace

template <class Real>
Var conv1d(Tape<Real>& tape, Var x, Var weight, Var bias, int kernel, int stride) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(weight);
  require(kernel >= 1 && stride >= 1, ErrorCategory::kInvalidArgument, "conv1d needs kernel, stride >= 1");
  const std::size_t cin = xv.rows();
  const std::size_t cout = wv.rows();
  const std::size_t k = static_cast<std::size_t>(kernel);
  if (wv.cols() != cin * k) {
    fail(ErrorCategory::kShapeMismatch, "conv1d weight " + wv.shape_string() + " does not fit input " + xv.shape_string());
  }
  const long pad = kernel / 2;
  const long lout_l = (static_cast<long>(xv.cols()) + 2 * pad - kernel) / stride + 1;
  require(lout_l >= 1, ErrorCategory::kShapeMismatch, "conv1d input too short");
  const std::size_t lout = static_cast<std::size_t>(lout_l);
  const bool direct = kernel == 1 && stride == 1;

  auto cols = std::make_shared<Tensor<Real>>();
  if (!direct) *cols = im2col(xv, k, lout, stride, pad);
  Tensor<Real> out(cout, lout);
  if (bias.valid()) {
    const auto& bv = tape.value(bias);
    require(bv.rows() == cout && bv.cols() == 1, ErrorCategory::kShapeMismatch, "conv1d bias shape");
    for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.data() + co * lout, lout, bv[co]);
  }
  kernels::gemm_nn<Real>(cout, lout, cin * k, wv.data(), direct ? xv.data() : cols->data(), out.data());
  if (!tape.recording()) return tape.push(std::move(out), {});

  return tape.push(std::move(out), [&tape, x, weight, bias, cols, cin, cout, k, lout, stride, pad, direct](Var y) {
    const auto& gy = tape.grad(y);
    const auto& wv = tape.value(weight);
    const Real* col_data = direct ? tape.value(x).data() : cols->data();
    kernels::gemm_nt<Real>(cout, cin * k, lout, gy.data(), col_data, tape.grad(weight).data());
    if (bias.valid()) {
      auto& gb = tape.grad(bias);
      for (std::size_t co = 0; co < cout; ++co) {
        Real s = 0;
        for (std::size_t l = 0; l < lout; ++l) s += gy(co, l);
        gb[co] += s;
      }
    }
    auto& gx = tape.grad(x);
    if (direct) {
      kernels::gemm_tn<Real>(cin, lout, cout, wv.data(), gy.data(), gx.data());
      return;
    }
    Tensor<Real> gcols(cin * k, lout);
    kernels::gemm_tn<Real>(cin * k, lout, cout, wv.data(), gy.data(), gcols.data());
    col2im_add(gcols, gx, k, lout, stride, pad);
  });
}

template <class Real>
Var group_norm(Tape<Real>& tape, Var x, Var gamma, Var beta, int groups, double eps) {
  const auto& xv = tape.value(x);
  const std::size_t c = xv.rows();
  const std::size_t len = xv.cols();
  const std::size_t g = static_cast<std::size_t>(groups);
  require(groups >= 1 && c % g == 0, ErrorCategory::kShapeMismatch, "group count must divide channels");
  const auto& gv = tape.value(gamma);
  const auto& bv = tape.value(beta);
  require(gv.size() == c && bv.size() == c, ErrorCategory::kShapeMismatch, "group_norm affine shape");
  const std::size_t per = c / g;
  const std::size_t n = per * len;
  auto xhat = std::make_shared<Tensor<Real>>(c, len);
  auto inv_std = std::make_shared<std::vector<Real>>(g);
  Tensor<Real> out(c, len);
  for (std::size_t gi = 0; gi < g; ++gi) {
    const Real* base = xv.data() + gi * per * len;
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += base[i];
    mean /= double(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (base[i] - mean) * (base[i] - mean);
    var /= double(n);
    const Real is = static_cast<Real>(1.0 / std::sqrt(var + eps));
    (*inv_std)[gi] = is;
    for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch) {
      for (std::size_t l = 0; l < len; ++l) {
        const Real h = (xv(ch, l) - static_cast<Real>(mean)) * is;
        (*xhat)(ch, l) = h;
        out(ch, l) = gv[ch] * h + bv[ch];
      }
    }
  }
  if (!tape.recording()) return tape.push(std::move(out), {});
  return tape.push(std::move(out), [&tape, x, gamma, beta, xhat, inv_std, c, len, per, n, g](Var y) {
    const auto& gy = tape.grad(y);
    const auto& gv = tape.value(gamma);
    auto& ggamma = tape.grad(gamma);
    auto& gbeta = tape.grad(beta);
    auto& gx = tape.grad(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      Real sg = 0, sb = 0;
      for (std::size_t l = 0; l < len; ++l) {
        sg += gy(ch, l) * (*xhat)(ch, l);
        sb += gy(ch, l);
      }
      ggamma[ch] += sg;
      gbeta[ch] += sb;
    }
    for (std::size_t gi = 0; gi < g; ++gi) {
      Real sum_d = 0, sum_dx = 0;
      for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch) {
        for (std::size_t l = 0; l < len; ++l) {
          const Real d = gy(ch, l) * gv[ch];
          sum_d += d;
          sum_dx += d * (*xhat)(ch, l);
        }
      }
      const Real is = (*inv_std)[gi];
      const Real inv_n = Real(1) / static_cast<Real>(n);
      for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch) {
        for (std::size_t l = 0; l < len; ++l) {
          const Real d = gy(ch, l) * gv[ch];
          gx(ch, l) += is * (d - inv_n * sum_d - (*xhat)(ch, l) * inv_n * sum_dx);
        }
      }
    }
  });
}

template <class Real>
Var silu(Tape<Real>& tape, Var x) {
  return unary(
      tape, x, [](Real v) { return v * sigmoid_scalar(v); },
      [](Real v, Real) {
        const Real s = sigmoid_scalar(v);
        return s * (Real(1) + v * (Real(1) - s));
      });
}

template <class Real>
Var sigmoid(Tape<Real>& tape, Var x) {
  return unary(
      tape, x, [](Real v) { return sigmoid_scalar(v); }, [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Var tanh(Tape<Real>& tape, Var x) {
  return unary(
      tape, x, [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <class Real>
Var one_minus(Tape<Real>& tape, Var a) {
  return unary(
      tape, a, [](Real v) { return Real(1) - v; }, [](Real, Real) { return Real(-1); });
}

template <class Real>
Var scale(Tape<Real>& tape, Var a, Real factor) {
  return unary(
      tape, a, [factor](Real v) { return factor * v; }, [factor](Real, Real) { return factor; });
}

template <class Real>
Var add(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor<Real> out = av;
  add_into(out, bv);
  return tape.push(std::move(out), [&tape, a, b](Var y) {
    add_into(tape.grad(a), tape.grad(y));
    add_into(tape.grad(b), tape.grad(y));
  });
}

template <class Real>
Var sub(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_same_shape(av, bv, "sub");
  Tensor<Real> out = av;
  kernels::axpy<Real>(out.size(), Real(-1), bv.data(), out.data());
  return tape.push(std::move(out), [&tape, a, b](Var y) {
    const auto& gy = tape.grad(y);
    add_into(tape.grad(a), gy);
    kernels::axpy<Real>(gy.size(), Real(-1), gy.data(), tape.grad(b).data());
  });
}

template <class Real>
Var mul(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor<Real> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.push(std::move(out), [&tape, a, b](Var y) {
    const auto& gy = tape.grad(y);
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    auto& ga = tape.grad(a);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    auto& gb = tape.grad(b);
    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
  });
}

template <class Real>
Var add_col_bias(Tape<Real>& tape, Var x, Var v) {
  const auto& xv = tape.value(x);
  const auto& vv = tape.value(v);
  require(vv.rows() == xv.rows() && vv.cols() == 1, ErrorCategory::kShapeMismatch,
          "column bias " + vv.shape_string() + " does not fit " + xv.shape_string());
  Tensor<Real> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (auto& e : out.row(r)) e += vv[r];
  }
  return tape.push(std::move(out), [&tape, x, v](Var y) {
    const auto& gy = tape.grad(y);
    add_into(tape.grad(x), gy);
    auto& gv = tape.grad(v);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      Real s = 0;
      for (Real e : gy.row(r)) s += e;
      gv[r] += s;
    }
  });
}

template <class Real>
Var linear(Tape<Real>& tape, Var x, Var weight, Var bias) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(weight);
  require(xv.cols() == 1 && wv.cols() == xv.rows(), ErrorCategory::kShapeMismatch,
          "linear weight " + wv.shape_string() + " does not fit input " + xv.shape_string());
  const std::size_t out_dim = wv.rows();
  const std::size_t in_dim = wv.cols();
  Tensor<Real> out(out_dim, 1);
  if (bias.valid()) {
    const auto& bv = tape.value(bias);
    require(bv.rows() == out_dim && bv.cols() == 1, ErrorCategory::kShapeMismatch, "linear bias shape");
    out = bv;
  }
  kernels::gemm_nn<Real>(out_dim, 1, in_dim, wv.data(), xv.data(), out.data());
  return tape.push(std::move(out), [&tape, x, weight, bias, out_dim, in_dim](Var y) {
    const auto& gy = tape.grad(y);
    kernels::gemm_nt<Real>(out_dim, in_dim, 1, gy.data(), tape.value(x).data(), tape.grad(weight).data());
    if (bias.valid()) add_into(tape.grad(bias), gy);
    kernels::gemm_tn<Real>(in_dim, 1, out_dim, tape.value(weight).data(), gy.data(), tape.grad(x).data());
  });
}

template <class Real>
Var concat_rows(Tape<Real>& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCategory::kInvalidArgument, "concat of nothing");
  const std::size_t cols = tape.value(parts.front()).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    require(v.cols() == cols, ErrorCategory::kShapeMismatch,
            "concat length mismatch: " + std::to_string(v.cols()) + " vs " + std::to_string(cols));
    rows += v.rows();
  }
  Tensor<Real> out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    std::copy_n(v.data(), v.size(), out.data() + offset);
    offset += v.size();
  }
  return tape.push(std::move(out), [&tape, parts](Var y) {
    const auto& gy = tape.grad(y);
    std::size_t offset = 0;
    for (Var p : parts) {
      auto& gp = tape.grad(p);
      kernels::axpy<Real>(gp.size(), Real(1), gy.data() + offset, gp.data());
      offset += gp.size();
    }
  });
}

template <class Real>
Var slice_rows(Tape<Real>& tape, Var x, std::size_t begin, std::size_t count) {
  const auto& xv = tape.value(x);
  require(begin + count <= xv.rows(), ErrorCategory::kShapeMismatch, "row slice out of range");
  Tensor<Real> out(count, xv.cols());
  std::copy_n(xv.data() + begin * xv.cols(), out.size(), out.data());
  return tape.push(std::move(out), [&tape, x, begin](Var y) {
    const auto& gy = tape.grad(y);
    auto& gx = tape.grad(x);
    kernels::axpy<Real>(gy.size(), Real(1), gy.data(), gx.data() + begin * gx.cols());
  });
}

template <class Real>
Var upsample2(Tape<Real>& tape, Var x) {
  const auto& xv = tape.value(x);
  Tensor<Real> out(xv.rows(), xv.cols() * 2);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t l = 0; l < xv.cols(); ++l) out(r, 2 * l) = out(r, 2 * l + 1) = xv(r, l);
  }
  return tape.push(std::move(out), [&tape, x](Var y) {
    const auto& gy = tape.grad(y);
    auto& gx = tape.grad(x);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      for (std::size_t l = 0; l < gx.cols(); ++l) gx(r, l) += gy(r, 2 * l) + gy(r, 2 * l + 1);
    }
  });
}

template <class Real>
Var broadcast_cols(Tape<Real>& tape, Var v, std::size_t length) {
  const auto& vv = tape.value(v);
  require(vv.cols() == 1, ErrorCategory::kShapeMismatch, "broadcast needs a column vector");
  Tensor<Real> out(vv.rows(), length);
  for (std::size_t r = 0; r < vv.rows(); ++r) std::fill_n(out.data() + r * length, length, vv[r]);
  return tape.push(std::move(out), [&tape, v](Var y) {
    const auto& gy = tape.grad(y);
    auto& gv = tape.grad(v);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      Real s = 0;
      for (Real e : gy.row(r)) s += e;
      gv[r] += s;
    }
  });
}

template <class Real>
Var embedding_row(Tape<Real>& tape, Var table, std::size_t index, std::size_t length) {
  const auto& tv = tape.value(table);
  if (index >= tv.rows()) {
    fail(ErrorCategory::kInvalidArgument,
         "category " + std::to_string(index) + " outside table of " + std::to_string(tv.rows()) + " rows");
  }
  const std::size_t d = tv.cols();
  Tensor<Real> out(d, length);
  for (std::size_t r = 0; r < d; ++r) std::fill_n(out.data() + r * length, length, tv(index, r));
  return tape.push(std::move(out), [&tape, table, index](Var y) {
    const auto& gy = tape.grad(y);
    auto& gt = tape.grad(table);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      Real s = 0;
      for (Real e : gy.row(r)) s += e;
      gt(index, r) += s;
    }
  });
}

template <class Real>
Var masked_mse(Tape<Real>& tape, Var pred, const Tensor<Real>& target, const std::vector<std::size_t>& columns) {
  const auto& pv = tape.value(pred);
  require(target.rows() == pv.rows() && target.cols() == columns.size(), ErrorCategory::kShapeMismatch,
          "mse target " + target.shape_string() + " does not match prediction rows / selected columns");
  require(!columns.empty(), ErrorCategory::kInvalidArgument, "mse over zero positions");
  const Real inv_n = Real(1) / static_cast<Real>(pv.rows() * columns.size());
  auto diff = std::make_shared<Tensor<Real>>(target.rows(), target.cols());
  Real total = 0;
  for (std::size_t r = 0; r < pv.rows(); ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      require(columns[j] < pv.cols(), ErrorCategory::kShapeMismatch, "mse column out of range");
      const Real d = pv(r, columns[j]) - target(r, j);
      (*diff)(r, j) = d;
      total += d * d;
    }
  }
  Tensor<Real> out(1, 1, total * inv_n);
  return tape.push(std::move(out), [&tape, pred, diff, columns, inv_n](Var y) {
    const Real gy = tape.grad(y)[0];
    auto& gp = tape.grad(pred);
    for (std::size_t r = 0; r < diff->rows(); ++r) {
      for (std::size_t j = 0; j < columns.size(); ++j) gp(r, columns[j]) += Real(2) * inv_n * gy * (*diff)(r, j);
    }
  });
}

#define TRACE_INSTANTIATE(Real)                                                                             \
  template Var conv1d<Real>(Tape<Real>&, Var, Var, Var, int, int);                                          \
  template Var group_norm<Real>(Tape<Real>&, Var, Var, Var, int, double);                                   \
  template Var silu<Real>(Tape<Real>&, Var);                                                                \
  template Var sigmoid<Real>(Tape<Real>&, Var);                                                             \
  template Var tanh<Real>(Tape<Real>&, Var);                                                                \
  template Var add<Real>(Tape<Real>&, Var, Var);                                                            \
  template Var sub<Real>(Tape<Real>&, Var, Var);                                                            \
  template Var mul<Real>(Tape<Real>&, Var, Var);                                                            \
  template Var one_minus<Real>(Tape<Real>&, Var);                                                           \
  template Var scale<Real>(Tape<Real>&, Var, Real);                                                         \
  template Var add_col_bias<Real>(Tape<Real>&, Var, Var);                                                   \
  template Var linear<Real>(Tape<Real>&, Var, Var, Var);                                                    \
  template Var concat_rows<Real>(Tape<Real>&, const std::vector<Var>&);                                     \
  template Var slice_rows<Real>(Tape<Real>&, Var, std::size_t, std::size_t);                                \
  template Var upsample2<Real>(Tape<Real>&, Var);                                                           \
  template Var broadcast_cols<Real>(Tape<Real>&, Var, std::size_t);                                         \
  template Var embedding_row<Real>(Tape<Real>&, Var, std::size_t, std::size_t);                             \
  template Var masked_mse<Real>(Tape<Real>&, Var, const Tensor<Real>&, const std::vector<std::size_t>&);

TRACE_INSTANTIATE(float)
TRACE_INSTANTIATE(double)
#undef TRACE_INSTANTIATE

}  // namespace ag

template class Tape<float>;
template class Tape<double>;

}  // namespace trace
