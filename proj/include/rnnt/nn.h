// include/rnnt/nn.h
//
// LSTM layers and the optimizer shared by every network in the project.
// Each layer exposes two evaluation paths that perform identical arithmetic:
// a value path for decoding and a tape path for training.

#ifndef RNNT_NN_H_
#define RNNT_NN_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rnnt/array.h"
#include "rnnt/tape.h"

namespace rnnt {

// Deterministic uniform draw in [lo, hi) from the top 53 bits of the engine.
double UniformDouble(std::mt19937_64 &rng, double lo, double hi);

// Fills every parameter uniformly in [-scale, scale].
void InitializeUniform(std::span<Parameter *const> params, uint64_t seed,
                       double scale = 0.1);

struct LstmState {
  Array h;  // 1 x hidden
  Array c;  // 1 x hidden
};

struct LstmStateVar {
  Var h;
  Var c;
};

// Gate layout along the 4*hidden axis: input, forget, cell, output.
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(const std::string &name, size_t input_dim, size_t hidden_dim);

  size_t input_dim() const { return w_in_.value.rows(); }
  size_t hidden_dim() const { return w_rec_.value.rows(); }

  LstmState ZeroState() const;
  LstmState Step(const Array &x, const LstmState &state) const;

  LstmStateVar ZeroState(Tape &tape) const;
  LstmStateVar Step(Tape &tape, Var x, const LstmStateVar &state) const;
  LstmStateVar Step(Tape &tape, Var x, const LstmStateVar &state);
  // Runs the layer over all rows of `xs` (T x input) from a zero state and
  // returns the T x hidden outputs.
  Var Sequence(Tape &tape, Var xs) const;
  Var Sequence(Tape &tape, Var xs);

  std::vector<Parameter *> Params() { return {&w_in_, &w_rec_, &bias_}; }
  std::vector<const Parameter *> Params() const {
    return {&w_in_, &w_rec_, &bias_};
  }

 private:
  template <typename Self>
  static LstmStateVar StepImpl(Self &self, Tape &tape, Var x,
                               const LstmStateVar &state);
  template <typename Self>
  static Var SequenceImpl(Self &self, Tape &tape, Var xs);
  // Gate nonlinearities shared by Step and Sequence once the 1 x 4H
  // pre-activation is known.
  static LstmStateVar Gates(Var pre, const LstmStateVar &state, size_t hidden);

  Parameter w_in_;   // input x 4H
  Parameter w_rec_;  // H x 4H
  Parameter bias_;   // 1 x 4H
};

// Plain SGD with a global gradient-norm clip. Gradients are zeroed after
// every step.
class Sgd {
 public:
  Sgd(double learning_rate, double clip_norm)
      : learning_rate_(learning_rate), clip_norm_(clip_norm) {}

  // Returns the gradient norm before clipping.
  double Step(std::span<Parameter *const> params);

  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr) { learning_rate_ = lr; }

 private:
  double learning_rate_;
  double clip_norm_;
};

void ZeroGrads(std::span<Parameter *const> params);

}  // namespace rnnt

#endif  // RNNT_NN_H_
