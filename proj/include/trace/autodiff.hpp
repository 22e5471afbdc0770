#pragma once

// Reverse-mode differentiation over coarse tensor ops.
//
// A Tape records every op's output value and, when recording, a closure that
// pushes the output gradient back to the op inputs. Parameters enter the tape
// by reference; after backward() their gradients are folded into the owning
// ModelParams with accumulate_param_grads(). A tape is single-use and
// confined to one thread.

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "trace/params.hpp"
#include "trace/tensor.hpp"

namespace trace {

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

template <class Real>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor<Real> value);
  Var parameter(const ModelParams<Real>& params, std::size_t index);
  Var parameter(const ModelParams<Real>& params, const std::string& name) {
    return parameter(params, params.index(name));
  }

  const Tensor<Real>& value(Var v) const;
  // Gradient buffer of v, allocated as zeros on first access.
  Tensor<Real>& grad(Var v);
  bool has_grad(Var v) const;

  // Records an op. During backward() the closure receives the op's own
  // output variable, whose gradient is populated by then.
  using BackwardFn = std::function<void(Var)>;
  Var push(Tensor<Real> value, BackwardFn backward_fn);

  // Seeds a 1x1 output with `seed` and runs every recorded closure in reverse.
  void backward(Var loss, Real seed = Real(1));
  void backward(Var output, const Tensor<Real>& seed);

  // Adds scale * d(loss)/d(param) into params.grad for every parameter used.
  void accumulate_param_grads(ModelParams<Real>& params, Real scale = Real(1)) const;

 private:
  struct Node {
    Tensor<Real> owned;
    const Tensor<Real>* ref = nullptr;
    Tensor<Real> grad;
    const ModelParams<Real>* params = nullptr;
    std::size_t param_index = 0;
  };

  void run_backward();

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::vector<BackwardFn> backward_fns_;
  std::vector<std::pair<const ModelParams<Real>*, std::size_t>> param_lookup_;
  std::vector<std::uint32_t> param_nodes_;
};

namespace ag {

// x: Cin x L; weight: Cout x (Cin * kernel); bias: Cout x 1 or invalid.
// Zero padding of kernel / 2 on each side.
template <class Real>
Var conv1d(Tape<Real>& tape, Var x, Var weight, Var bias, int kernel, int stride = 1);

template <class Real>
Var group_norm(Tape<Real>& tape, Var x, Var gamma, Var beta, int groups, double eps = 1e-5);

template <class Real>
Var silu(Tape<Real>& tape, Var x);
template <class Real>
Var sigmoid(Tape<Real>& tape, Var x);
template <class Real>
Var tanh(Tape<Real>& tape, Var x);

template <class Real>
Var add(Tape<Real>& tape, Var a, Var b);
template <class Real>
Var sub(Tape<Real>& tape, Var a, Var b);
template <class Real>
Var mul(Tape<Real>& tape, Var a, Var b);
template <class Real>
Var one_minus(Tape<Real>& tape, Var a);
template <class Real>
Var scale(Tape<Real>& tape, Var a, Real factor);

// x: C x L plus v: C x 1 broadcast over columns.
template <class Real>
Var add_col_bias(Tape<Real>& tape, Var x, Var v);

// y = W x + b for column vectors; bias may be invalid.
template <class Real>
Var linear(Tape<Real>& tape, Var x, Var weight, Var bias);

template <class Real>
Var concat_rows(Tape<Real>& tape, const std::vector<Var>& parts);
template <class Real>
Var slice_rows(Tape<Real>& tape, Var x, std::size_t begin, std::size_t count);

// Repeats every column twice.
template <class Real>
Var upsample2(Tape<Real>& tape, Var x);

// v: d x 1 repeated into d x length.
template <class Real>
Var broadcast_cols(Tape<Real>& tape, Var v, std::size_t length);

// Row `index` of a table (vocab x d), as a d x length sequence.
template <class Real>
Var embedding_row(Tape<Real>& tape, Var table, std::size_t index, std::size_t length);

// Mean of (pred[:, columns[j]] - target[:, j])^2 over all selected entries.
template <class Real>
Var masked_mse(Tape<Real>& tape, Var pred, const Tensor<Real>& target, const std::vector<std::size_t>& columns);

}  // namespace ag
}  // namespace trace
