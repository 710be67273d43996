// include/rnnt/losses.h
//
// Training criteria recorded on a Tape. Batch losses are means over
// sequences except the J' term, which averages over aligned label positions.
// Losses that keep a network fixed freeze its parameters on the tape, so
// Backward leaves their Parameter::grad untouched.

#ifndef RNNT_LOSSES_H_
#define RNNT_LOSSES_H_

#include <span>
#include <vector>

#include "rnnt/ilm.h"
#include "rnnt/lattice.h"
#include "rnnt/utterance.h"

namespace rnnt {

// -log P_RNNT(a_1^S | X) for one utterance.
Var RnntSequenceNll(Tape &tape, RnntModel &model, const Utterance &utt,
                    Topology topology);
Var RnntLoss(Tape &tape, RnntModel &model, std::span<const Utterance> batch,
             Topology topology);

// Networks an ILM loss may train. Only the member matching `kind` is used.
struct IlmNetworks {
  IlmKind kind = IlmKind::kZero;
  RnntModel *model = nullptr;
  MiniIlmNet *mini = nullptr;
  RecurrentLm *density_ratio = nullptr;
};

// -log P_ILM(a_1^S); `features` is needed by avg only.
Var IlmSequenceNll(Tape &tape, const IlmNetworks &nets,
                   std::span<const int> labels, const Array *features);
Var IlmLoss(Tape &tape, const IlmNetworks &nets,
            std::span<const Utterance> batch);

// L_RNNT + alpha * L_ILM with the encoder frozen. `nets.model` must be
// `model`; kind is zero, avg or mini-lstm.
Var IlmtLoss(Tape &tape, RnntModel &model, const IlmNetworks &nets,
             std::span<const Utterance> batch, Topology topology, double alpha);

// A transcription with the frozen encoder output and the frame t(s) at which
// each label is emitted on its best path.
struct AlignedExample {
  std::string id;
  std::vector<int> labels;
  Array encoded;               // T' x d_enc
  std::vector<size_t> frames;  // one per label
};

AlignedExample MakeAlignedExample(const RnntModel &model, const Utterance &utt,
                                  Topology topology);

// Mean over aligned positions of CE(softmax J\eps(g_{s-1}, h_t(s)),
// softmax J\eps(g_{s-1}, f_ILM(a_1^{s-1}))). The transducer is frozen.
Var JPrimeLoss(Tape &tape, RnntModel &model, MiniIlmNet &mini,
               std::span<const AlignedExample> batch);

// L_ILM(mini-lstm) + alpha * L_J' over the same transcriptions. The
// transducer is frozen.
Var ExactIlmLoss(Tape &tape, RnntModel &model, MiniIlmNet &mini,
                 std::span<const AlignedExample> batch, double alpha);

}  // namespace rnnt

#endif  // RNNT_LOSSES_H_
