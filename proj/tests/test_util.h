// tests/test_util.h
//
// Shared fixtures: seeded random arrays, tiny model configurations and a
// central finite-difference gradient checker.

#ifndef RNNT_TESTS_TEST_UTIL_H_
#define RNNT_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rnnt/array.h"
#include "rnnt/model.h"
#include "rnnt/nn.h"
#include "rnnt/tape.h"
#include "rnnt/utterance.h"

namespace rnnt::testing {

inline Array RandomArray(size_t rows, size_t cols, std::mt19937_64 &rng, double lo = -1.0,
                         double hi = 1.0) {
  Array a(rows, cols);
  for (size_t i = 0; i < a.size(); ++i) a[i] = UniformDouble(rng, lo, hi);
  return a;
}

// Relative difference with a floor so that entries near zero are judged on
// an absolute scale of `floor`.
inline double RelativeError(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double MaxRelativeError(const Array &a, const Array &b, double floor = 1e-300) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, RelativeError(a[i], b[i], floor));
  return worst;
}

// A random log-distribution over n outcomes.
inline std::vector<double> RandomLogDistribution(size_t n, std::mt19937_64 &rng) {
  std::vector<double> v(n);
  double total = 0.0;
  for (double &x : v) {
    x = std::exp(UniformDouble(rng, -2.0, 2.0));
    total += x;
  }
  for (double &x : v) x = std::log(x / total);
  return v;
}

inline RnntConfig TinyRnntConfig(size_t vocab = 3, size_t feature_dim = 2) {
  RnntConfig c;
  c.vocab_size = vocab;
  c.feature_dim = feature_dim;
  c.encoder_layers = 1;
  c.encoder_units = 3;
  c.prediction_layers = 1;
  c.prediction_units = 3;
  c.embedding_dim = 2;
  c.joint_units = 3;
  return c;
}

inline RnntModel TinyRnnt(uint64_t seed, RnntConfig config = TinyRnntConfig(),
                          double scale = 0.5) {
  RnntModel m(config, Vocabulary::Synthetic(config.vocab_size));
  m.Initialize(seed);
  InitializeUniform(m.Params(), seed, scale);
  return m;
}

inline MiniIlmNet TinyMini(const RnntModel &model, uint64_t seed, double scale = 0.5) {
  MiniIlmConfig c;
  c.vocab_size = model.vocab_size();
  c.embedding_dim = 2;
  c.hidden_units = 2;
  c.output_dim = model.encoder_dim();
  MiniIlmNet mini(c, model.vocab());
  mini.Initialize(seed);
  InitializeUniform(mini.Params(), seed + 7, scale);
  return mini;
}

inline Utterance RandomUtterance(size_t frames, std::vector<int> labels, size_t dim,
                                 std::mt19937_64 &rng, const std::string &id = "u") {
  return {id, std::move(labels), RandomArray(frames, dim, rng)};
}

struct GradientReport {
  double max_relative_error = 0.0;
  std::string worst;  // "<param>[<index>] analytic=<a> numeric=<n>"
  size_t checked = 0;
  double max_abs_gradient = 0.0;
};

// Compares d(loss)/d(param) from Tape::Backward with central differences of
// step `h` on every entry of every parameter. `loss` must build the loss on
// the tape it is given.
inline GradientReport CheckGradients(const std::function<Var(Tape &)> &loss,
                                     std::span<Parameter *const> params, double h = 1e-5,
                                     double floor = 1e-6) {
  ZeroGrads(params);
  {
    Tape tape;
    tape.Backward(loss(tape));
  }
  std::vector<Array> analytic;
  for (Parameter *p : params) analytic.push_back(p->grad);
  ZeroGrads(params);
  auto eval = [&] {
    Tape tape;
    return loss(tape).value()[0];
  };
  GradientReport r;
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter &p = *params[k];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = eval();
      p.value[i] = saved - h;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double e = RelativeError(a, numeric, floor);
      r.max_abs_gradient = std::max(r.max_abs_gradient, std::abs(a));
      ++r.checked;
      if (e > r.max_relative_error || r.worst.empty()) {
        if (e >= r.max_relative_error) {
          r.max_relative_error = e;
          r.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
        }
      }
    }
  }
  return r;
}

}  // namespace rnnt::testing

#endif  // RNNT_TESTS_TEST_UTIL_H_
