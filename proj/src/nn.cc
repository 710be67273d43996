// src/nn.cc

#include "rnnt/nn.h"

#include <cmath>

#include "rnnt/error.h"

namespace rnnt {

double UniformDouble(std::mt19937_64 &rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

void InitializeUniform(std::span<Parameter *const> params, uint64_t seed,
                       double scale) {
  std::mt19937_64 rng(seed);
  for (Parameter *p : params) {
    for (double &v : p->value.data()) v = UniformDouble(rng, -scale, scale);
    p->ZeroGrad();
  }
}

LstmLayer::LstmLayer(const std::string &name, size_t input_dim,
                     size_t hidden_dim)
    : w_in_(name + ".w_in", input_dim, 4 * hidden_dim),
      w_rec_(name + ".w_rec", hidden_dim, 4 * hidden_dim),
      bias_(name + ".bias", 1, 4 * hidden_dim) {}

LstmState LstmLayer::ZeroState() const {
  return {Array(1, hidden_dim()), Array(1, hidden_dim())};
}

LstmState LstmLayer::Step(const Array &x, const LstmState &state) const {
  if (x.rows() != 1 || x.cols() != input_dim()) {
    throw ShapeError("lstm-step: input " + x.ShapeString() + " for layer " +
                     w_in_.name + " expecting [1," +
                     std::to_string(input_dim()) + "]");
  }
  if (state.h.cols() != hidden_dim() || state.c.cols() != hidden_dim()) {
    throw ShapeError("lstm-step: state " + state.h.ShapeString() +
                     " for hidden size " + std::to_string(hidden_dim()));
  }
  using namespace kernels;
  const size_t hd = hidden_dim();
  Array pre = AddRow(Add(MatMul(x, w_in_.value), MatMul(state.h, w_rec_.value)),
                     bias_.value);
  Array i = Sigmoid(SliceCols(pre, 0, hd));
  Array f = Sigmoid(SliceCols(pre, hd, 2 * hd));
  Array g = Tanh(SliceCols(pre, 2 * hd, 3 * hd));
  Array o = Sigmoid(SliceCols(pre, 3 * hd, 4 * hd));
  LstmState next;
  next.c = Add(Mul(f, state.c), Mul(i, g));
  next.h = Mul(o, Tanh(next.c));
  return next;
}

LstmStateVar LstmLayer::ZeroState(Tape &tape) const {
  return {tape.Constant(Array(1, hidden_dim())),
          tape.Constant(Array(1, hidden_dim()))};
}

LstmStateVar LstmLayer::Gates(Var pre, const LstmStateVar &state,
                              size_t hd) {
  Var i = Sigmoid(SliceCols(pre, 0, hd));
  Var f = Sigmoid(SliceCols(pre, hd, 2 * hd));
  Var g = Tanh(SliceCols(pre, 2 * hd, 3 * hd));
  Var o = Sigmoid(SliceCols(pre, 3 * hd, 4 * hd));
  LstmStateVar next;
  next.c = Add(Mul(f, state.c), Mul(i, g));
  next.h = Mul(o, Tanh(next.c));
  return next;
}

template <typename Self>
LstmStateVar LstmLayer::StepImpl(Self &self, Tape &tape, Var x,
                                 const LstmStateVar &state) {
  if (x.rows() != 1 || x.cols() != self.input_dim()) {
    throw ShapeError("lstm-step: input " + x.value().ShapeString() +
                     " for layer " + self.w_in_.name);
  }
  Var pre = AddRow(Add(MatMul(x, tape.Param(self.w_in_)),
                       MatMul(state.h, tape.Param(self.w_rec_))),
                   tape.Param(self.bias_));
  return Gates(pre, state, self.hidden_dim());
}

template <typename Self>
Var LstmLayer::SequenceImpl(Self &self, Tape &tape, Var xs) {
  if (xs.cols() != self.input_dim()) {
    throw ShapeError("lstm-sequence: input " + xs.value().ShapeString() +
                     " for layer " + self.w_in_.name);
  }
  Var projected = MatMul(xs, tape.Param(self.w_in_));
  Var w_rec = tape.Param(self.w_rec_);
  Var bias = tape.Param(self.bias_);
  LstmStateVar state = self.ZeroState(tape);
  std::vector<Var> outputs;
  outputs.reserve(xs.rows());
  for (size_t t = 0; t < xs.rows(); ++t) {
    Var pre =
        AddRow(Add(TakeRow(projected, t), MatMul(state.h, w_rec)), bias);
    state = Gates(pre, state, self.hidden_dim());
    outputs.push_back(state.h);
  }
  return ConcatRows(outputs);
}

LstmStateVar LstmLayer::Step(Tape &tape, Var x,
                             const LstmStateVar &state) const {
  return StepImpl(*this, tape, x, state);
}
LstmStateVar LstmLayer::Step(Tape &tape, Var x, const LstmStateVar &state) {
  return StepImpl(*this, tape, x, state);
}
Var LstmLayer::Sequence(Tape &tape, Var xs) const {
  return SequenceImpl(*this, tape, xs);
}
Var LstmLayer::Sequence(Tape &tape, Var xs) {
  return SequenceImpl(*this, tape, xs);
}

void ZeroGrads(std::span<Parameter *const> params) {
  for (Parameter *p : params) p->ZeroGrad();
}

double Sgd::Step(std::span<Parameter *const> params) {
  double sq = 0.0;
  for (const Parameter *p : params) {
    for (double g : p->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("sgd: non-finite gradient norm");
  const double factor =
      (clip_norm_ > 0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;
  for (Parameter *p : params) {
    if (p->grad.size() != p->value.size()) continue;
    for (size_t k = 0; k < p->value.size(); ++k) {
      p->value[k] -= learning_rate_ * factor * p->grad[k];
    }
    p->ZeroGrad();
  }
  return norm;
}

}  // namespace rnnt
