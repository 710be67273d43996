// include/rnnt/tape.h
//
// Reverse-mode differentiation over Array values. A Tape records every op in
// execution order, so walking it backwards is a valid reverse topological
// order and each node is visited exactly once.

#ifndef RNNT_TAPE_H_
#define RNNT_TAPE_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rnnt/array.h"

namespace rnnt {

struct Parameter {
  std::string name;
  Array value;
  Array grad;  // same shape as value; accumulated by Tape::Backward

  Parameter() = default;
  Parameter(std::string n, size_t rows, size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
  void ZeroGrad() { grad = Array(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape *tape = nullptr;
  int32_t id = -1;

  const Array &value() const;
  size_t rows() const { return value().rows(); }
  size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  // Receives the node's output gradient and its forward value.
  using BackwardFn =
      std::function<void(Tape &, const Array &grad_out, const Array &out)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var Constant(Array value);
  // Leaf bound to a trainable parameter. Repeated calls with the same
  // parameter return the same node. Frozen parameters become constants.
  Var Param(const Parameter &p);
  Var Param(Parameter &p);
  void Freeze(std::span<Parameter *const> params);
  bool IsFrozen(const Parameter &p) const { return frozen_.count(&p) != 0; }

  // Records an op result. `inputs` are the nodes `backward` may push
  // gradient into; the node only needs a gradient if one of them does.
  Var Record(std::string_view op, Array value, std::vector<int32_t> inputs,
             BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. Parameter leaves add their
  // gradient into Parameter::grad. The loss must be 1 x 1.
  void Backward(Var loss);

  const Array &Value(Var v) const { return nodes_[v.id].value; }
  const Array &Value(int32_t id) const { return nodes_[id].value; }
  // Gradient of a node after Backward; zero array if none reached it.
  const Array &Grad(Var v);
  bool NeedsGrad(int32_t id) const { return nodes_[id].needs_grad; }
  // Accumulator for an input's gradient, allocated on first use.
  Array &GradRef(int32_t id);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    Array grad;
    std::vector<int32_t> inputs;
    BackwardFn backward;
    Parameter *param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter *, int32_t> bound_;
  std::unordered_set<const Parameter *> frozen_;
};

// Differentiable ops. Shapes are checked and reported via ShapeError.
Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var AddRow(Var a, Var bias);
Var Mul(Var a, Var b);
Var Scale(Var a, double factor);
Var Tanh(Var a);
Var Sigmoid(Var a);
// Rows of `table` selected by `ids`, stacked in order.
Var EmbedLookup(Var table, std::span<const int> ids);
Var LogSoftmax(Var a);
Var MeanRows(Var a);
// Elements (r, c) picked into a 1 x k row.
Var Gather(Var a, std::span<const std::pair<size_t, size_t>> positions);
Var Sum(Var a);
// Scalar sum(weights .* a) with constant weights.
Var WeightedSum(Var a, const Array &weights);
Var SliceCols(Var a, size_t begin, size_t end);
Var TakeRow(Var a, size_t r);
Var ConcatRows(std::span<const Var> parts);
Var PairwiseRowSum(Var a, Var b);

}  // namespace rnnt

#endif  // RNNT_TAPE_H_
