// src/lattice.cc
//
// Both topologies share one state space: (t, s) with t in [0, T'] and
// s in [0, S], start (0, 0), final (T', S). A blank always moves t -> t+1.
// A label moves s -> s+1 and, for the monotonic topology, also t -> t+1.
// Arcs leave only states with t < T' and use the node distribution at (t, s).

#include "rnnt/lattice.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rnnt/error.h"

namespace rnnt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Node log-probabilities in the row order t * (S+1) + s, as shared by
// PosteriorGrid and the tape op.
struct NodeView {
  const double *data;
  size_t frames;
  size_t labels;
  size_t symbols;

  double at(size_t t, size_t s, size_t k) const {
    return data[(t * (labels + 1) + s) * symbols + k];
  }
  size_t blank() const { return symbols - 1; }
};

class StateTable {
 public:
  StateTable(size_t frames, size_t labels, double fill)
      : labels_(labels), v_((frames + 1) * (labels + 1), fill) {}
  double &operator()(size_t t, size_t s) { return v_[t * (labels_ + 1) + s]; }
  double operator()(size_t t, size_t s) const {
    return v_[t * (labels_ + 1) + s];
  }

 private:
  size_t labels_;
  std::vector<double> v_;
};

// Destination of the label arc from (t, s).
size_t LabelDestFrame(Topology topology, size_t t) {
  return topology == Topology::kMonotonic ? t + 1 : t;
}

void CheckLabels(std::span<const int> labels, size_t symbols) {
  for (int a : labels) {
    if (a < 0 || static_cast<size_t>(a) + 1 >= symbols) {
      throw ArgumentError("lattice: label " + std::to_string(a) +
                          " outside vocabulary of size " +
                          std::to_string(symbols - 1));
    }
  }
}

StateTable Forward(const NodeView &n, std::span<const int> labels,
                   Topology topology) {
  const size_t T = n.frames, S = n.labels;
  StateTable alpha(T, S, kNegInf);
  alpha(0, 0) = 0.0;
  for (size_t t = 0; t <= T; ++t) {
    for (size_t s = 0; s <= S; ++s) {
      if (t == 0 && s == 0) continue;
      double acc = kNegInf;
      if (t > 0) acc = alpha(t - 1, s) + n.at(t - 1, s, n.blank());
      if (s > 0) {
        if (topology == Topology::kStandard && t < T) {
          acc = kernels::LogAdd(acc, alpha(t, s - 1) + n.at(t, s - 1, labels[s - 1]));
        } else if (topology == Topology::kMonotonic && t > 0) {
          acc = kernels::LogAdd(
              acc, alpha(t - 1, s - 1) + n.at(t - 1, s - 1, labels[s - 1]));
        }
      }
      alpha(t, s) = acc;
    }
  }
  return alpha;
}

StateTable Backward(const NodeView &n, std::span<const int> labels,
                    Topology topology) {
  const size_t T = n.frames, S = n.labels;
  StateTable beta(T, S, kNegInf);
  beta(T, S) = 0.0;
  for (size_t t = T + 1; t-- > 0;) {
    for (size_t s = S + 1; s-- > 0;) {
      if (t == T) continue;
      double acc = beta(t + 1, s) + n.at(t, s, n.blank());
      if (s < S) {
        acc = kernels::LogAdd(acc, beta(LabelDestFrame(topology, t), s + 1) +
                                       n.at(t, s, labels[s]));
      }
      beta(t, s) = acc;
    }
  }
  return beta;
}

NodeView View(const PosteriorGrid &grid) {
  return NodeView{grid.node(0, 0).data(), grid.frames(), grid.labels(),
                  grid.symbols()};
}

void CheckGrid(const PosteriorGrid &grid, std::span<const int> labels) {
  if (grid.labels() != labels.size()) {
    throw ArgumentError("lattice: grid built for " +
                        std::to_string(grid.labels()) + " labels, got " +
                        std::to_string(labels.size()));
  }
  CheckLabels(labels, grid.symbols());
}

}  // namespace

std::string TopologyName(Topology topology) {
  return topology == Topology::kStandard ? "standard" : "monotonic";
}

Topology ParseTopology(const std::string &name) {
  if (name == "standard") return Topology::kStandard;
  if (name == "monotonic") return Topology::kMonotonic;
  throw ArgumentError("unknown topology '" + name + "'");
}

bool Feasible(Topology topology, size_t frames, size_t labels) {
  if (frames == 0) return false;
  return topology == Topology::kStandard || labels <= frames;
}

PosteriorGrid::PosteriorGrid(size_t frames, size_t labels, size_t symbols)
    : frames_(frames),
      labels_(labels),
      symbols_(symbols),
      log_probs_(frames * (labels + 1) * symbols, 0.0) {}

PosteriorGrid BuildPosteriorGrid(const RnntModel &model, const Array &features,
                                 std::span<const int> labels,
                                 Topology topology) {
  if (!Feasible(topology, model.EncodedLength(features.rows()), labels.size())) {
    throw InfeasibleError("lattice: " + std::to_string(labels.size()) +
                          " labels do not fit " +
                          std::to_string(model.EncodedLength(features.rows())) +
                          " frames in the " + TopologyName(topology) +
                          " topology");
  }
  return BuildPosteriorGridFromEncoded(model, model.Encode(features), labels,
                                       topology);
}

PosteriorGrid BuildPosteriorGridFromEncoded(const RnntModel &model,
                                            const Array &encoded,
                                            std::span<const int> labels,
                                            Topology topology) {
  const size_t T = encoded.rows(), S = labels.size();
  if (!Feasible(topology, T, S)) {
    throw InfeasibleError("lattice: " + std::to_string(S) +
                          " labels do not fit " + std::to_string(T) +
                          " frames in the " + TopologyName(topology) +
                          " topology");
  }
  CheckLabels(labels, model.vocab_size() + 1);
  Array g(S + 1, model.prediction_dim());
  PredictionState state = model.PredictStep(model.PredictInitial(),
                                            model.start_symbol());
  for (size_t s = 0; s <= S; ++s) {
    if (s > 0) state = model.PredictStep(state, labels[s - 1]);
    std::copy(state.output.data().begin(), state.output.data().end(),
              g.row(s).begin());
  }
  const Array logp = kernels::LogSoftmaxRows(model.JointGrid(encoded, g));
  PosteriorGrid grid(T, S, model.vocab_size() + 1);
  std::copy(logp.data().begin(), logp.data().end(), grid.node(0, 0).begin());
  return grid;
}

LatticeScore FullSumLogProb(const PosteriorGrid &grid,
                            std::span<const int> labels, Topology topology) {
  CheckGrid(grid, labels);
  if (!Feasible(topology, grid.frames(), labels.size())) return {};
  const StateTable alpha = Forward(View(grid), labels, topology);
  return {alpha(grid.frames(), labels.size()), true};
}

std::vector<std::vector<int>> EnumerateAlignments(const PosteriorGrid &grid,
                                                  std::span<const int> labels,
                                                  Topology topology) {
  CheckGrid(grid, labels);
  const size_t T = grid.frames(), S = labels.size();
  if (T > 8 || S > 6) {
    throw ArgumentError("enumeration guard: T'=" + std::to_string(T) +
                        ", S=" + std::to_string(S) + " exceeds T'<=8, S<=6");
  }
  std::vector<std::vector<int>> paths;
  std::vector<int> path;
  const int blank = grid.blank();
  auto visit = [&](auto &&self, size_t t, size_t s) -> void {
    if (t == T) {
      if (s == S) paths.push_back(path);
      return;
    }
    path.push_back(blank);
    self(self, t + 1, s);
    path.pop_back();
    if (s < S) {
      path.push_back(labels[s]);
      self(self, LabelDestFrame(topology, t), s + 1);
      path.pop_back();
    }
  };
  if (Feasible(topology, T, S)) visit(visit, 0, 0);
  return paths;
}

double AlignmentLogProb(const PosteriorGrid &grid, std::span<const int> path,
                        Topology topology) {
  size_t t = 0, s = 0;
  double total = 0.0;
  for (int y : path) {
    if (t >= grid.frames() || y < 0 || static_cast<size_t>(y) >= grid.symbols()) {
      return kNegInf;
    }
    if (y == grid.blank()) {
      total += grid(t, s, y);
      ++t;
    } else {
      if (s >= grid.labels()) return kNegInf;
      total += grid(t, s, y);
      t = LabelDestFrame(topology, t);
      ++s;
    }
  }
  if (t != grid.frames() || s != grid.labels()) return kNegInf;
  return total;
}

LatticeScore BruteForceLogProb(const PosteriorGrid &grid,
                               std::span<const int> labels, Topology topology) {
  const auto paths = EnumerateAlignments(grid, labels, topology);
  if (paths.empty()) return {};
  std::vector<double> scores;
  for (const auto &p : paths) scores.push_back(AlignmentLogProb(grid, p, topology));
  return {kernels::LogSumExp(scores), true};
}

AlignmentPath ViterbiAlign(const PosteriorGrid &grid,
                           std::span<const int> labels, Topology topology) {
  CheckGrid(grid, labels);
  const size_t T = grid.frames(), S = labels.size();
  if (!Feasible(topology, T, S)) {
    throw InfeasibleError("viterbi: no " + TopologyName(topology) +
                          " path for " + std::to_string(S) + " labels in " +
                          std::to_string(T) + " frames");
  }
  const NodeView n = View(grid);
  StateTable best(T, S, kNegInf);
  // 1 where the best predecessor is the label arc.
  StateTable from_label(T, S, 0.0);
  best(0, 0) = 0.0;
  for (size_t t = 0; t <= T; ++t) {
    for (size_t s = 0; s <= S; ++s) {
      if (t == 0 && s == 0) continue;
      double via_blank = t > 0 ? best(t - 1, s) + n.at(t - 1, s, n.blank())
                               : kNegInf;
      double via_label = kNegInf;
      if (s > 0) {
        if (topology == Topology::kStandard && t < T) {
          via_label = best(t, s - 1) + n.at(t, s - 1, labels[s - 1]);
        } else if (topology == Topology::kMonotonic && t > 0) {
          via_label = best(t - 1, s - 1) + n.at(t - 1, s - 1, labels[s - 1]);
        }
      }
      if (via_label > via_blank) {
        best(t, s) = via_label;
        from_label(t, s) = 1.0;
      } else {
        best(t, s) = via_blank;
      }
    }
  }
  AlignmentPath out;
  out.log_prob = best(T, S);
  size_t t = T, s = S;
  while (t > 0 || s > 0) {
    if (from_label(t, s) != 0.0) {
      const size_t src_t = topology == Topology::kMonotonic ? t - 1 : t;
      out.symbols.push_back(labels[s - 1]);
      out.frames.push_back(src_t);
      t = src_t;
      --s;
    } else {
      out.symbols.push_back(grid.blank());
      --t;
    }
  }
  std::reverse(out.symbols.begin(), out.symbols.end());
  std::reverse(out.frames.begin(), out.frames.end());
  return out;
}

std::vector<int> Collapse(std::span<const int> path, int blank) {
  std::vector<int> out;
  for (int y : path) {
    if (y != blank) out.push_back(y);
  }
  return out;
}

Var RnntNll(Var log_probs, size_t frames, std::span<const int> labels,
            Topology topology) {
  const Array &lp = log_probs.value();
  const size_t S = labels.size();
  if (lp.rows() != frames * (S + 1) || lp.cols() < 2) {
    throw ShapeError("rnnt-nll: node matrix " + lp.ShapeString() + " for T'=" +
                     std::to_string(frames) + ", S=" + std::to_string(S));
  }
  CheckLabels(labels, lp.cols());
  if (!Feasible(topology, frames, S)) {
    throw InfeasibleError("rnnt-nll: no " + TopologyName(topology) +
                          " path for " + std::to_string(S) + " labels in " +
                          std::to_string(frames) + " frames");
  }
  const NodeView n{lp.data().data(), frames, S, lp.cols()};
  StateTable alpha = Forward(n, labels, topology);
  const double log_p = alpha(frames, S);
  std::vector<int> lab(labels.begin(), labels.end());
  return log_probs.tape->Record(
      "rnnt-nll", Array(1, 1, -log_p), {log_probs.id},
      [log_probs, frames, lab = std::move(lab), topology,
       alpha = std::move(alpha), log_p](Tape &tape, const Array &g,
                                        const Array &) {
        const Array &lp = tape.Value(log_probs);
        const NodeView n{lp.data().data(), frames, lab.size(), lp.cols()};
        const StateTable beta = Backward(n, lab, topology);
        Array &dst = tape.GradRef(log_probs.id);
        const size_t S = lab.size();
        const size_t cols = lp.cols();
        for (size_t t = 0; t < frames; ++t) {
          for (size_t s = 0; s <= S; ++s) {
            const double a = alpha(t, s);
            if (a == kNegInf) continue;
            const size_t row = t * (S + 1) + s;
            const size_t b = cols - 1;
            dst(row, b) -= g[0] * std::exp(a + n.at(t, s, b) +
                                           beta(t + 1, s) - log_p);
            if (s < S) {
              const size_t k = static_cast<size_t>(lab[s]);
              dst(row, k) -= g[0] * std::exp(
                  a + n.at(t, s, k) +
                  beta(LabelDestFrame(topology, t), s + 1) - log_p);
            }
          }
        }
      });
}

void SaveAlignments(const std::string &path, const Vocabulary &vocab,
                    const std::vector<AlignmentRecord> &records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const AlignmentRecord &r : records) {
    if (r.labels.size() != r.frames.size()) {
      throw ArgumentError("alignment '" + r.id + "': labels and frames differ in length");
    }
    os << r.id << ' ' << TopologyName(r.topology);
    for (size_t s = 0; s < r.labels.size(); ++s) {
      os << ' ' << vocab.Label(r.labels[s]) << ':' << r.frames[s];
    }
    os << '\n';
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::vector<AlignmentRecord> LoadAlignments(const std::string &path,
                                            const Vocabulary &vocab) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<AlignmentRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream fields(line);
    AlignmentRecord r;
    std::string topology, pair;
    if (!(fields >> r.id >> topology)) {
      throw ParseError(path, lineno, "expected '<id> <topology> <label>:<frame>...'");
    }
    try {
      r.topology = ParseTopology(topology);
    } catch (const ArgumentError &e) {
      throw ParseError(path, lineno, e.what());
    }
    while (fields >> pair) {
      const size_t colon = pair.rfind(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == pair.size()) {
        throw ParseError(path, lineno, "bad label:frame pair '" + pair + "'");
      }
      const std::string label = pair.substr(0, colon);
      const std::string frame = pair.substr(colon + 1);
      if (!vocab.Contains(label)) {
        throw ParseError(path, lineno, "unknown label '" + label + "'");
      }
      if (frame.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError(path, lineno, "bad frame '" + frame + "'");
      }
      r.labels.push_back(vocab.Id(label));
      r.frames.push_back(std::stoul(frame));
      if (r.frames.size() > 1 && r.frames.back() < r.frames[r.frames.size() - 2]) {
        throw ParseError(path, lineno, "frames decrease");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rnnt
