// tests/oracles.h
//
// Independent reference computations shared by the unit tests and the
// acceptance binary. None of them call the library routine they check.

#ifndef RNNT_TESTS_ORACLES_H_
#define RNNT_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "rnnt/lattice.h"
#include "test_util.h"

namespace rnnt::testing {

inline PosteriorGrid RandomGrid(size_t frames, size_t labels, size_t vocab, std::mt19937_64 &rng) {
  PosteriorGrid g(frames, labels, vocab + 1);
  for (size_t t = 0; t < frames; ++t) {
    for (size_t s = 0; s <= labels; ++s) {
      const auto d = RandomLogDistribution(vocab + 1, rng);
      std::copy(d.begin(), d.end(), g.node(t, s).begin());
    }
  }
  return g;
}

inline PosteriorGrid UniformGrid(size_t frames, size_t labels, size_t vocab) {
  PosteriorGrid g(frames, labels, vocab + 1);
  for (size_t t = 0; t < frames; ++t)
    for (size_t s = 0; s <= labels; ++s)
      for (double &v : g.node(t, s)) v = -std::log(static_cast<double>(vocab + 1));
  return g;
}

// Walks the lattice recursively and returns every path's probability,
// independent of the library's enumeration and forward recursion.
inline std::vector<double> OraclePathProbs(const PosteriorGrid &g, const std::vector<int> &labels,
                                           Topology topology) {
  const size_t T = g.frames(), S = labels.size();
  const int blank = g.blank();
  std::vector<double> out;
  std::function<void(size_t, size_t, double)> walk = [&](size_t t, size_t s, double p) {
    if (topology == Topology::kStandard) {
      if (s < S) walk(t, s + 1, p * std::exp(g(t, s, labels[s])));
      const double pb = p * std::exp(g(t, s, blank));
      if (t + 1 < T) {
        walk(t + 1, s, pb);
      } else if (s == S) {
        out.push_back(pb);
      }
    } else {
      if (t == T) {
        if (s == S) out.push_back(p);
        return;
      }
      if (s < S) walk(t + 1, s + 1, p * std::exp(g(t, s, labels[s])));
      walk(t + 1, s, p * std::exp(g(t, s, blank)));
    }
  };
  walk(0, 0, 1.0);
  return out;
}

// Minimal unit-cost edit distance by enumerating every alignment of ref
// against hyp (match/substitute, delete, insert), without dynamic
// programming.
inline size_t EditDistanceByEnumeration(const std::vector<int> &ref, const std::vector<int> &hyp) {
  size_t best = std::numeric_limits<size_t>::max();
  std::function<void(size_t, size_t, size_t)> walk = [&](size_t i, size_t j, size_t cost) {
    if (cost >= best) return;
    if (i == ref.size() && j == hyp.size()) {
      best = cost;
      return;
    }
    if (i < ref.size() && j < hyp.size()) walk(i + 1, j + 1, cost + (ref[i] != hyp[j]));
    if (i < ref.size()) walk(i + 1, j, cost + 1);
    if (j < hyp.size()) walk(i, j + 1, cost + 1);
  };
  walk(0, 0, 0);
  return best;
}

// Every sequence over {0..alphabet-1} of length <= max_len, shortest first.
inline std::vector<std::vector<int>> AllSequences(size_t max_len, int alphabet) {
  std::vector<std::vector<int>> out{{}};
  for (size_t begin = 0, len = 1; len <= max_len; ++len) {
    const size_t end = out.size();
    for (size_t k = begin; k < end; ++k) {
      for (int a = 0; a < alphabet; ++a) {
        auto next = out[k];
        next.push_back(a);
        out.push_back(std::move(next));
      }
    }
    begin = end;
  }
  return out;
}

}  // namespace rnnt::testing

#endif  // RNNT_TESTS_ORACLES_H_
