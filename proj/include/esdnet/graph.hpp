#pragma once

#include <cstdint>
#include <string>
#include <vector>
#include <deque>

#include "esdnet/kernels.hpp"
#include "esdnet/tensor.hpp"

// Reverse-mode autodiff over an append-only tape. Each builder method runs
// the forward kernel immediately and records what backward() needs. Nodes
// are referenced by index; the tape owns all values and gradients.

namespace esdnet {

enum class Op {
  Leaf, Const, Conv2d, PsDown, PsUp, Resize, Gap, Affine, Relu, Sigmoid,
  Add, MulChannel, L1Diff, Concat, SliceCols, MaxPool2, Sum, Scale,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Const: return "const";
    case Op::Conv2d: return "conv2d";
    case Op::PsDown: return "pixel_shuffle_down";
    case Op::PsUp: return "pixel_shuffle_up";
    case Op::Resize: return "resize_bilinear";
    case Op::Gap: return "global_avg_pool";
    case Op::Affine: return "affine";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Add: return "add";
    case Op::MulChannel: return "mul_channel";
    case Op::L1Diff: return "l1_diff";
    case Op::Concat: return "concat";
    case Op::SliceCols: return "slice_cols";
    case Op::MaxPool2: return "maxpool2";
    case Op::Sum: return "sum";
    case Op::Scale: return "scale";
  }
  return "?";
}

template <class T>
class Tape {
 public:
  struct Node {
    Op op;
    std::vector<int> in;
    TensorT<T> val;
    TensorT<T> grad;   // empty until backward touches it
    bool rg = false;   // gradient flows through this node
    ConvSpec spec;     // Conv2d
    int i0 = 0;        // PsDown/PsUp: r, Resize: oh, SliceCols: start
    int i1 = 0;        // Resize: ow, SliceCols: len
    double s = 1.0;    // Scale
    std::vector<std::uint8_t> argmax;  // MaxPool2
  };

  // When set, every op validates its output and throws NumericError with
  // the offending node id. Off by default, it roughly doubles memory scans.
  bool guard = false;

  int size() const { return int(nodes_.size()); }

  const TensorT<T>& val(int id) const { return at(id).val; }

  bool has_grad(int id) const { return !at(id).grad.data.empty(); }

  const TensorT<T>& grad(int id) const {
    const Node& n = at(id);
    if (n.grad.data.empty())
      throw ContractError("no gradient recorded for node " + std::to_string(id));
    return n.grad;
  }

  bool requires_grad(int id) const { return at(id).rg; }

  int leaf(TensorT<T> v, bool rg = true) {
    Node n{Op::Leaf, {}, std::move(v), {}, rg, {}, 0, 0, 1.0, {}};
    return push(std::move(n));
  }

  int constant(TensorT<T> v) { return leaf(std::move(v), false); }

  int conv2d(int x, int w, int b, const ConvSpec& sp = {}) {
    Node n;
    n.op = Op::Conv2d;
    n.in = {x, w, b};
    n.spec = sp;
    n.val = conv2d_fwd(val(x), val(w), b >= 0 ? &val(b) : nullptr, sp);
    n.rg = at(x).rg || at(w).rg || (b >= 0 && at(b).rg);
    return push(std::move(n));
  }

  int pixel_shuffle_down(int x, int r) {
    Node n;
    n.op = Op::PsDown;
    n.in = {x};
    n.i0 = r;
    n.val = esdnet::pixel_shuffle_down(val(x), r);
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int pixel_shuffle_up(int x, int r) {
    Node n;
    n.op = Op::PsUp;
    n.in = {x};
    n.i0 = r;
    n.val = esdnet::pixel_shuffle_up(val(x), r);
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int resize(int x, int oh, int ow) {
    Node n;
    n.op = Op::Resize;
    n.in = {x};
    n.i0 = oh;
    n.i1 = ow;
    n.val = resize_bilinear_fwd(val(x), oh, ow);
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int gap(int x) {
    Node n;
    n.op = Op::Gap;
    n.in = {x};
    n.val = global_avg_pool_fwd(val(x));
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int affine(int x, int w, int b) {
    Node n;
    n.op = Op::Affine;
    n.in = {x, w, b};
    n.val = affine_fwd(val(x), val(w), val(b));
    n.rg = at(x).rg || at(w).rg || at(b).rg;
    return push(std::move(n));
  }

  int relu(int x) {
    Node n;
    n.op = Op::Relu;
    n.in = {x};
    n.val = relu_fwd(val(x));
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int sigmoid(int x) {
    Node n;
    n.op = Op::Sigmoid;
    n.in = {x};
    n.val = sigmoid_fwd(val(x));
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int add(int a, int b) {
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.val = add_fwd(val(a), val(b));
    n.rg = at(a).rg || at(b).rg;
    return push(std::move(n));
  }

  int mul_channel(int a, int w) {
    Node n;
    n.op = Op::MulChannel;
    n.in = {a, w};
    n.val = mul_channel_fwd(val(a), val(w));
    n.rg = at(a).rg || at(w).rg;
    return push(std::move(n));
  }

  int l1_diff(int a, int b) {
    Node n;
    n.op = Op::L1Diff;
    n.in = {a, b};
    n.val = l1_diff_fwd(val(a), val(b));
    n.rg = at(a).rg || at(b).rg;
    return push(std::move(n));
  }

  int concat(const std::vector<int>& parts) {
    Node n;
    n.op = Op::Concat;
    n.in = parts;
    std::vector<const TensorT<T>*> vs;
    vs.reserve(parts.size());
    n.rg = false;
    for (int p : parts) {
      vs.push_back(&val(p));
      n.rg = n.rg || at(p).rg;
    }
    n.val = concat_fwd(vs);
    return push(std::move(n));
  }

  int slice_cols(int x, int start, int len) {
    Node n;
    n.op = Op::SliceCols;
    n.in = {x};
    n.i0 = start;
    n.i1 = len;
    n.val = slice_cols_fwd(val(x), start, len);
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int maxpool2(int x) {
    Node n;
    n.op = Op::MaxPool2;
    n.in = {x};
    n.val = maxpool2_fwd(val(x), n.argmax);
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int sum(int x) {
    Node n;
    n.op = Op::Sum;
    n.in = {x};
    n.val = sum_fwd(val(x));
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  int scale(int x, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {x};
    n.s = s;
    n.val = scale_fwd(val(x), s);
    n.rg = at(x).rg;
    return push(std::move(n));
  }

  // Reverse sweep from a scalar output. Gradients from a previous call are
  // discarded first.
  void backward(int out) {
    Node& root = at(out);
    if (root.val.numel() != 1)
      throw ContractError("backward: output must be a scalar, got " + shape_str(root.val));
    if (!root.rg)
      throw ContractError("backward: output does not depend on any gradient leaf");
    for (Node& n : nodes_) {
      n.grad.shape.clear();
      n.grad.data.clear();
    }
    root.grad = TensorT<T>::full({1}, T(1));
    for (int id = out; id >= 0; --id) {
      Node& n = nodes_[std::size_t(id)];
      if (n.grad.data.empty() || !n.rg) continue;
      step_back(n);
    }
  }

  // Forward-only sanity check for a node's value.
  void assert_finite(int id) const {
    if (!all_finite(val(id)))
      throw NumericError("non-finite value at node " + std::to_string(id) +
                         " (" + op_name(at(id).op) + ")");
  }

 private:
  // deque keeps val()/grad() references valid while later nodes are appended
  std::deque<Node> nodes_;

  const Node& at(int id) const {
    if (id < 0 || id >= size())
      throw ContractError("invalid node id " + std::to_string(id));
    return nodes_[std::size_t(id)];
  }
  Node& at(int id) {
    if (id < 0 || id >= size())
      throw ContractError("invalid node id " + std::to_string(id));
    return nodes_[std::size_t(id)];
  }

  int push(Node&& n) {
    nodes_.push_back(std::move(n));
    const int id = size() - 1;
    if (guard) assert_finite(id);
    return id;
  }

  void accumulate(int id, const TensorT<T>& g) {
    Node& n = at(id);
    if (!n.rg) return;
    if (n.grad.data.empty()) {
      n.grad = g;
      return;
    }
    if (!n.grad.same_shape(g))
      throw ContractError("gradient shape mismatch at node " + std::to_string(id));
    for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
  }

  void step_back(Node& n) {
    const TensorT<T>& gy = n.grad;
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Conv2d: {
        const int x = n.in[0], w = n.in[1], b = n.in[2];
        if (at(x).rg)
          accumulate(x, conv2d_bwd_input(gy, val(w), n.spec, val(x).shape));
        if (at(w).rg)
          accumulate(w, conv2d_bwd_weight(gy, val(x), n.spec, val(w).shape));
        if (b >= 0 && at(b).rg) accumulate(b, conv2d_bwd_bias(gy));
        break;
      }
      case Op::PsDown:
        accumulate(n.in[0], esdnet::pixel_shuffle_up(gy, n.i0));
        break;
      case Op::PsUp:
        accumulate(n.in[0], esdnet::pixel_shuffle_down(gy, n.i0));
        break;
      case Op::Resize:
        accumulate(n.in[0], resize_bilinear_bwd(gy, val(n.in[0]).shape));
        break;
      case Op::Gap:
        accumulate(n.in[0], global_avg_pool_bwd(gy, val(n.in[0]).shape));
        break;
      case Op::Affine: {
        const int x = n.in[0], w = n.in[1], b = n.in[2];
        TensorT<T> gx, gw, gb;
        affine_bwd(gy, val(x), val(w),
                   at(x).rg ? &gx : nullptr,
                   at(w).rg ? &gw : nullptr,
                   at(b).rg ? &gb : nullptr);
        if (at(x).rg) accumulate(x, gx);
        if (at(w).rg) accumulate(w, gw);
        if (at(b).rg) accumulate(b, gb);
        break;
      }
      case Op::Relu:
        accumulate(n.in[0], relu_bwd(gy, val(n.in[0])));
        break;
      case Op::Sigmoid:
        accumulate(n.in[0], sigmoid_bwd(gy, n.val));
        break;
      case Op::Add:
        accumulate(n.in[0], gy);
        accumulate(n.in[1], gy);
        break;
      case Op::MulChannel: {
        const int a = n.in[0], w = n.in[1];
        TensorT<T> ga, gw;
        mul_channel_bwd(gy, val(a), val(w),
                        at(a).rg ? &ga : nullptr,
                        at(w).rg ? &gw : nullptr);
        if (at(a).rg) accumulate(a, ga);
        if (at(w).rg) accumulate(w, gw);
        break;
      }
      case Op::L1Diff: {
        const int a = n.in[0], b = n.in[1];
        TensorT<T> ga, gb;
        l1_diff_bwd(gy, val(a), val(b),
                    at(a).rg ? &ga : nullptr,
                    at(b).rg ? &gb : nullptr);
        if (at(a).rg) accumulate(a, ga);
        if (at(b).rg) accumulate(b, gb);
        break;
      }
      case Op::Concat: {
        std::vector<std::vector<int>> shapes;
        shapes.reserve(n.in.size());
        for (int p : n.in) shapes.push_back(val(p).shape);
        std::vector<TensorT<T>> parts = concat_bwd(gy, shapes);
        for (std::size_t i = 0; i < n.in.size(); ++i)
          accumulate(n.in[i], parts[i]);
        break;
      }
      case Op::SliceCols:
        accumulate(n.in[0], slice_cols_bwd(gy, n.i0, val(n.in[0]).shape));
        break;
      case Op::MaxPool2:
        accumulate(n.in[0], maxpool2_bwd(gy, n.argmax, val(n.in[0]).shape));
        break;
      case Op::Sum: {
        TensorT<T> g = TensorT<T>::full(val(n.in[0]).shape, gy.data[0]);
        accumulate(n.in[0], g);
        break;
      }
      case Op::Scale:
        accumulate(n.in[0], scale_fwd(gy, n.s));
        break;
    }
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

// ------------------------------------------------------- gradient check

struct GradCheckReport {
  double max_rel = 0.0;      // worst relative error over all probes
  double analytic = 0.0;     // analytic gradient at the worst probe
  double numeric = 0.0;      // central difference at the worst probe
  int worst_input = -1;
  std::int64_t worst_elem = -1;
  std::int64_t probes = 0;
};

// Compares tape gradients against central differences in double precision.
// `build` receives a fresh tape plus leaf ids for `inputs` and returns the
// scalar output id. Set max_probes_per_input to bound the cost on large
// graphs; 0 probes every element.
template <class Build>
GradCheckReport grad_check(const std::vector<TensorD>& inputs, Build&& build,
                           double eps = 1e-4, std::int64_t max_probes_per_input = 0,
                           std::uint64_t seed = 42) {
  std::vector<TensorD> analytic;
  {
    TapeD tape;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) ids.push_back(tape.leaf(in, true));
    const int out = build(tape, ids);
    if (tape.val(out).numel() != 1)
      throw ContractError("grad_check: build must return a scalar node");
    tape.backward(out);
    for (int id : ids) {
      if (tape.has_grad(id))
        analytic.push_back(tape.grad(id));
      else
        analytic.push_back(TensorD(tape.val(id).shape));
    }
  }

  auto eval = [&](const std::vector<TensorD>& probe) {
    TapeD tape;
    std::vector<int> ids;
    ids.reserve(probe.size());
    for (const auto& in : probe) ids.push_back(tape.leaf(in, false));
    return tape.val(build(tape, ids)).data[0];
  };

  GradCheckReport rep;
  Rng rng(seed);
  std::vector<TensorD> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::int64_t n = inputs[i].numel();
    std::vector<std::int64_t> elems;
    if (max_probes_per_input <= 0 || n <= max_probes_per_input) {
      elems.resize(std::size_t(n));
      for (std::int64_t k = 0; k < n; ++k) elems[std::size_t(k)] = k;
    } else {
      // Stratified draw: one random element from each of max_probes bins.
      for (std::int64_t k = 0; k < max_probes_per_input; ++k) {
        const std::int64_t lo = k * n / max_probes_per_input;
        const std::int64_t hi = (k + 1) * n / max_probes_per_input;
        elems.push_back(lo + std::int64_t(rng.uniform_int(std::uint64_t(hi - lo))));
      }
    }
    for (std::int64_t e : elems) {
      const double saved = work[i].data[std::size_t(e)];
      work[i].data[std::size_t(e)] = saved + eps;
      const double fp = eval(work);
      work[i].data[std::size_t(e)] = saved - eps;
      const double fm = eval(work);
      work[i].data[std::size_t(e)] = saved;
      const double num = (fp - fm) / (2.0 * eps);
      const double ana = analytic[i].data[std::size_t(e)];
      // The floor compares near-zero gradient elements absolutely: below it,
      // central-difference noise swamps any relative reading.
      const double rel = std::abs(ana - num) / std::max(1e-5, std::abs(ana) + std::abs(num));
      ++rep.probes;
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.analytic = ana;
        rep.numeric = num;
        rep.worst_input = int(i);
        rep.worst_elem = e;
      }
    }
  }
  return rep;
}

}  // namespace esdnet
