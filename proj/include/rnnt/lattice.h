// include/rnnt/lattice.h
//
// Alignment lattices of a transducer. Frames t and label positions s are
// 0-based: node (t, s) holds the distribution over V and blank after s labels
// were emitted while frame t is being read.
//
// kStandard: blank moves (t, s) -> (t+1, s), a label moves (t, s) -> (t, s+1);
//   the path ends with a blank from (T'-1, S). C(T'+S-1, S) paths.
// kMonotonic: every symbol consumes one frame; a label moves (t, s) ->
//   (t+1, s+1). Requires S <= T'. C(T', S) paths.

#ifndef RNNT_LATTICE_H_
#define RNNT_LATTICE_H_

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rnnt/model.h"
#include "rnnt/tape.h"

namespace rnnt {

enum class Topology { kStandard, kMonotonic };

std::string TopologyName(Topology topology);
Topology ParseTopology(const std::string &name);

// Whether any path of `topology` spans `frames` encoder frames and emits
// `labels` labels.
bool Feasible(Topology topology, size_t frames, size_t labels);

class PosteriorGrid {
 public:
  PosteriorGrid() = default;
  PosteriorGrid(size_t frames, size_t labels, size_t symbols);

  size_t frames() const { return frames_; }
  size_t labels() const { return labels_; }
  // |V| + 1; the last symbol is blank.
  size_t symbols() const { return symbols_; }
  int blank() const { return static_cast<int>(symbols_) - 1; }

  double operator()(size_t t, size_t s, size_t k) const {
    return log_probs_[Index(t, s) + k];
  }
  double &operator()(size_t t, size_t s, size_t k) {
    return log_probs_[Index(t, s) + k];
  }
  std::span<const double> node(size_t t, size_t s) const {
    return {log_probs_.data() + Index(t, s), symbols_};
  }
  std::span<double> node(size_t t, size_t s) {
    return {log_probs_.data() + Index(t, s), symbols_};
  }

 private:
  size_t Index(size_t t, size_t s) const {
    return (t * (labels_ + 1) + s) * symbols_;
  }

  size_t frames_ = 0;
  size_t labels_ = 0;
  size_t symbols_ = 0;
  std::vector<double> log_probs_;
};

// Node (t, s) = log softmax(J(f^pred(a_1^s), h_t)). Throws InfeasibleError
// when no path of `topology` exists.
PosteriorGrid BuildPosteriorGrid(const RnntModel &model, const Array &features,
                                 std::span<const int> labels,
                                 Topology topology);
PosteriorGrid BuildPosteriorGridFromEncoded(const RnntModel &model,
                                            const Array &encoded,
                                            std::span<const int> labels,
                                            Topology topology);

struct LatticeScore {
  double log_prob = -std::numeric_limits<double>::infinity();
  bool feasible = false;
};

// log P(a_1^S | X) summed over all alignments by a forward recursion.
// Infeasible lattices yield {-inf, false}.
LatticeScore FullSumLogProb(const PosteriorGrid &grid,
                            std::span<const int> labels, Topology topology);

// Every alignment string of the lattice, blank written as grid.blank().
// Guarded to T' <= 8 and S <= 6 (ArgumentError otherwise).
std::vector<std::vector<int>> EnumerateAlignments(const PosteriorGrid &grid,
                                                  std::span<const int> labels,
                                                  Topology topology);
// Log-probability of one alignment string; -inf if it is not a path.
double AlignmentLogProb(const PosteriorGrid &grid, std::span<const int> path,
                        Topology topology);
// Sum over EnumerateAlignments; the reference for FullSumLogProb.
LatticeScore BruteForceLogProb(const PosteriorGrid &grid,
                               std::span<const int> labels, Topology topology);

struct AlignmentPath {
  std::vector<int> symbols;   // y_1^U, blank = |V|
  std::vector<size_t> frames;  // frame index t(s) of each emitted label
  double log_prob = -std::numeric_limits<double>::infinity();
};

// Best single path. On equal scores the blank predecessor wins. Throws
// InfeasibleError when no path exists.
AlignmentPath ViterbiAlign(const PosteriorGrid &grid,
                           std::span<const int> labels, Topology topology);

// Removes blanks.
std::vector<int> Collapse(std::span<const int> path, int blank);

// -log P(a_1^S | X) from a (T' * (S+1)) x (|V|+1) matrix of node
// log-probabilities in row order t * (S+1) + s. The backward pass uses the
// forward-backward occupancies.
Var RnntNll(Var log_probs, size_t frames, std::span<const int> labels,
            Topology topology);

// Alignment cache record: the frame at which each label is emitted.
struct AlignmentRecord {
  std::string id;
  Topology topology = Topology::kMonotonic;
  std::vector<int> labels;
  std::vector<size_t> frames;  // same length as labels, non-decreasing

  bool operator==(const AlignmentRecord &) const = default;
};

// One line per record: "<id> <topology> <label>:<frame> ...".
void SaveAlignments(const std::string &path, const Vocabulary &vocab,
                    const std::vector<AlignmentRecord> &records);
// ParseError with the line number on malformed records.
std::vector<AlignmentRecord> LoadAlignments(const std::string &path,
                                            const Vocabulary &vocab);

}  // namespace rnnt

#endif  // RNNT_LATTICE_H_
