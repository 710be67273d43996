// include/rnnt/ilm.h
//
// Internal-LM estimators. Each yields log P_ILM(. | a_1^{s-1}) over V:
//   zero, avg, mini-lstm: log softmax over the blank-free joint outputs
//     J(f^pred(a_1^{s-1}), h') with h' = 0, mean_t h_t, or f_ILM(a_1^{s-1});
//   density-ratio: a separate LM with its sentence-end mass removed and the
//     rest renormalized over V.

#ifndef RNNT_ILM_H_
#define RNNT_ILM_H_

#include <string>
#include <vector>

#include "rnnt/model.h"

namespace rnnt {

enum class IlmKind { kNone, kDensityRatio, kZero, kAvg, kMiniLstm };

std::string IlmKindName(IlmKind kind);
IlmKind ParseIlmKind(const std::string &name);

// Non-owning; resources must outlive the variant.
struct IlmVariant {
  IlmKind kind = IlmKind::kNone;
  const RecurrentLm *density_ratio = nullptr;
  const MiniIlmNet *mini = nullptr;

  // Throws ArgumentError when the resource the kind needs is missing.
  void Validate(const RnntModel &model) const;
};

struct IlmState {
  size_t consumed = 0;
  PredictionState prediction;  // zero, avg, mini-lstm
  Array h_prime;               // zero and avg: fixed for the utterance
  MiniIlmNet::State mini;      // mini-lstm
  LmState lm;                  // density-ratio
  Array log_probs;             // 1 x |V|; empty for kNone
};

// `encoded` (T' x d_enc) is required for avg and ignored otherwise.
IlmState IlmInit(const IlmVariant &variant, const RnntModel &model,
                 const Array *encoded = nullptr);
IlmState IlmAdvance(const IlmVariant &variant, const RnntModel &model,
                    const IlmState &state, int label);

// log softmax over V of the blank-free joint at (g, h').
Array IlmLogProbsFromPrediction(const RnntModel &model, const Array &g,
                                const Array &h_prime);
// Drops the last (sentence-end) entry and renormalizes.
Array DropEos(const Array &log_probs);

double IlmSequenceLogProb(const IlmVariant &variant, const RnntModel &model,
                          std::span<const int> labels,
                          const Array *encoded = nullptr);

}  // namespace rnnt

#endif  // RNNT_ILM_H_
