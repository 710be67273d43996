// include/rnnt/decoder.h
//
// Alignment-synchronous beam search. Every iteration moves each hypothesis
// by one alignment symbol; a blank advances the frame, a label extends the
// history (and, in the monotonic topology, also advances the frame).
// Hypotheses reaching frame T' are finished; finishing adds
// lm_scale * log P_LM(</s>) when an external LM is attached.

#ifndef RNNT_DECODER_H_
#define RNNT_DECODER_H_

#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rnnt/ilm.h"
#include "rnnt/lattice.h"

namespace rnnt {

enum class Recombination { kLogSumExp, kMax };

std::string RecombinationName(Recombination r);
// "sum" or "max".
Recombination ParseRecombination(const std::string &name);

struct FusionConfig {
  double lm_scale = 0.0;       // lambda1
  double ilm_scale = 0.0;      // lambda2
  double length_reward = 0.0;  // rho, added per emitted label
  IlmKind ilm = IlmKind::kNone;
  // Scale the ILM-corrected label distribution back into the transducer's
  // label mass 1 - P(blank) instead of dividing by P_ILM^lambda2.
  bool renorm_eps = false;
  size_t beam = 128;
  double score_beam = 12.0;
  Recombination recombination = Recombination::kLogSumExp;
  // Standard topology only: a label may leave (t, s) only if
  // s < (t + 1) * max_labels_per_frame. Keeps the search space finite.
  size_t max_labels_per_frame = 3;

  void Validate() const;
};

// Per-symbol search scores from one lattice node.
//   node: log P over V and blank (blank last), |V|+1 entries
//   lm:   log P_LM over V and </s>, or empty
//   ilm:  log P_ILM over V, or empty
// The blank score is node[blank] in every mode.
std::vector<double> StepScores(std::span<const double> node,
                               std::span<const double> lm,
                               std::span<const double> ilm,
                               const FusionConfig &config);

// Models used by a decode; all non-owning.
struct DecodeResources {
  const RnntModel *model = nullptr;
  const LanguageModel *lm = nullptr;
  IlmVariant ilm;

  // Throws DimensionError when vocabularies disagree.
  void Validate() const;
};

// Caches everything a decode of one utterance computes that does not depend
// on the fusion scales: node distributions per (history, frame) and the
// LM and ILM distributions per history. Reusable across configs.
class UtteranceScorer {
 public:
  UtteranceScorer(const DecodeResources &resources, const Array &features);

  size_t frames() const { return encoded_.rows(); }
  size_t vocab_size() const { return resources_.model->vocab_size(); }
  const DecodeResources &resources() const { return resources_; }
  const Array &encoded() const { return encoded_; }

  static constexpr int kRoot = 0;
  int Child(int node, int label);
  int Parent(int node) const { return nodes_[node].parent; }
  int Label(int node) const { return nodes_[node].label; }
  const std::vector<int> &History(int node) const { return nodes_[node].history; }

  std::span<const double> NodeLogProbs(int node, size_t t);
  std::span<const double> LmLogProbs(int node);   // empty without an LM
  std::span<const double> IlmLogProbs(int node);  // empty for kNone

 private:
  struct TrieNode {
    int parent = -1;
    int label = -1;
    std::vector<int> history;
    std::map<int, int> children;
    bool prediction_ready = false;
    PredictionState prediction;
    Array pred_proj;
    std::vector<std::vector<double>> joint;  // per frame, lazily filled
    bool lm_ready = false;
    LmState lm;
    bool ilm_ready = false;
    MiniIlmNet::State mini;  // mini-lstm
    LmState ilm_lm;          // density-ratio
    Array ilm_log_probs;
  };

  void EnsurePrediction(int node);
  void EnsureLm(int node);
  void EnsureIlm(int node);

  DecodeResources resources_;
  Array encoded_;
  Array enc_proj_;
  Array h_prime_;  // zero and avg
  std::vector<TrieNode> nodes_;
};

struct Hypothesis {
  std::vector<int> labels;
  double score = -std::numeric_limits<double>::infinity();
  // Best alignment string merged into this hypothesis, blank = |V|.
  std::vector<int> alignment;
};

struct DecodeResult {
  std::vector<Hypothesis> nbest;  // best first
  const Hypothesis &best() const { return nbest.front(); }
};

DecodeResult BeamSearch(UtteranceScorer &scorer, const FusionConfig &config,
                        Topology topology);
DecodeResult BeamSearchDecode(const DecodeResources &resources,
                              const Array &features, const FusionConfig &config,
                              Topology topology);

// Enumerates every alignment string, aggregates per label sequence with the
// config's recombination and returns the best sequence with its score.
// ArgumentError when more than `max_paths` strings exist.
Hypothesis ExhaustiveDecode(const DecodeResources &resources,
                            const Array &features, const FusionConfig &config,
                            Topology topology, size_t max_paths = 1000000);

// Finishing term lambda1 * log P_LM(</s> | history); 0 without an LM.
double FinalScore(std::span<const double> lm_log_probs,
                  const FusionConfig &config);

// One line per hypothesis: id, rank, score, label ids, label strings,
// separated by tabs; ids and strings are space-separated.
struct NbestEntry {
  std::string id;
  size_t rank = 0;
  double score = 0.0;
  std::vector<int> labels;
};
void WriteNbest(std::ostream &os, const std::string &id,
                const DecodeResult &result, const Vocabulary &vocab);
std::vector<NbestEntry> ReadNbest(std::istream &is, const Vocabulary &vocab,
                                  const std::string &name = "<nbest>");

}  // namespace rnnt

#endif  // RNNT_DECODER_H_
