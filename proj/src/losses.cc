// src/losses.cc

#include "rnnt/losses.h"

#include <algorithm>
#include <cmath>

#include "rnnt/error.h"

namespace rnnt {
namespace {

Var MeanOf(const std::vector<Var> &parts) {
  if (parts.empty()) throw ArgumentError("loss: empty batch");
  return Scale(Sum(ConcatRows(parts)), 1.0 / static_cast<double>(parts.size()));
}

// -sum_s log_probs(s, labels[s]).
Var PickedNll(Var log_probs, std::span<const int> labels) {
  std::vector<std::pair<size_t, size_t>> pos;
  for (size_t s = 0; s < labels.size(); ++s) {
    pos.emplace_back(s, static_cast<size_t>(labels[s]));
  }
  return Scale(Sum(Gather(log_probs, pos)), -1.0);
}

// Rows 0 .. n-1 of `a`.
Var FirstRows(Var a, size_t n) {
  std::vector<int> ids(n);
  for (size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  return EmbedLookup(a, ids);
}

// log softmax over V of J(pred row s, h' row s).
Var BlankFreeLogProbs(Tape &tape, RnntModel &model, Var pred, Var h_prime) {
  return LogSoftmax(SliceCols(model.JointRows(tape, pred, h_prime), 0,
                              model.vocab_size()));
}

std::span<const int> History(std::span<const int> labels) {
  return labels.first(labels.size() - 1);
}

}  // namespace

Var RnntSequenceNll(Tape &tape, RnntModel &model, const Utterance &utt,
                    Topology topology) {
  Var enc = model.Encode(tape, utt.features);
  if (!Feasible(topology, enc.rows(), utt.labels.size())) {
    throw InfeasibleError("utterance '" + utt.id + "': " +
                          std::to_string(utt.labels.size()) +
                          " labels do not fit " + std::to_string(enc.rows()) +
                          " frames (" + TopologyName(topology) + ")");
  }
  Var pred = model.PredictionOutputs(tape, utt.labels);
  Var lp = LogSoftmax(model.JointGrid(tape, enc, pred));
  return RnntNll(lp, enc.rows(), utt.labels, topology);
}

Var RnntLoss(Tape &tape, RnntModel &model, std::span<const Utterance> batch,
             Topology topology) {
  std::vector<Var> parts;
  for (const Utterance &u : batch) {
    parts.push_back(RnntSequenceNll(tape, model, u, topology));
  }
  return MeanOf(parts);
}

Var IlmSequenceNll(Tape &tape, const IlmNetworks &nets,
                   std::span<const int> labels, const Array *features) {
  const size_t S = labels.size();
  if (S == 0) return tape.Constant(Array(1, 1));
  if (nets.kind == IlmKind::kDensityRatio) {
    if (nets.density_ratio == nullptr) {
      throw ArgumentError("density-ratio ILM loss needs the LM");
    }
    const size_t V = nets.density_ratio->vocab_size();
    Var logits = FirstRows(nets.density_ratio->Logits(tape, labels), S);
    return PickedNll(LogSoftmax(SliceCols(logits, 0, V)), labels);
  }
  if (nets.model == nullptr) throw ArgumentError("ILM loss needs the transducer");
  RnntModel &model = *nets.model;
  Var pred = model.PredictionOutputs(tape, History(labels));
  Var h_prime;
  switch (nets.kind) {
    case IlmKind::kZero:
      h_prime = tape.Constant(Array(S, model.encoder_dim()));
      break;
    case IlmKind::kAvg: {
      if (features == nullptr || features->rows() == 0) {
        throw ArgumentError("avg ILM loss needs acoustic features");
      }
      Var mean = MeanRows(model.Encode(tape, *features));
      h_prime = EmbedLookup(mean, std::vector<int>(S, 0));
      break;
    }
    case IlmKind::kMiniLstm:
      if (nets.mini == nullptr) throw ArgumentError("mini-lstm ILM loss needs the net");
      h_prime = nets.mini->Outputs(tape, labels);
      break;
    default:
      throw ArgumentError("no ILM loss for variant " + IlmKindName(nets.kind));
  }
  return PickedNll(BlankFreeLogProbs(tape, model, pred, h_prime), labels);
}

Var IlmLoss(Tape &tape, const IlmNetworks &nets,
            std::span<const Utterance> batch) {
  std::vector<Var> parts;
  for (const Utterance &u : batch) {
    parts.push_back(IlmSequenceNll(tape, nets, u.labels, &u.features));
  }
  return MeanOf(parts);
}

Var IlmtLoss(Tape &tape, RnntModel &model, const IlmNetworks &nets,
             std::span<const Utterance> batch, Topology topology,
             double alpha) {
  if (alpha < 0) throw ArgumentError("ILMT: alpha must be >= 0");
  if (nets.model != &model || nets.kind == IlmKind::kDensityRatio ||
      nets.kind == IlmKind::kNone) {
    throw ArgumentError("ILMT needs a zero, avg or mini-lstm ILM of the model");
  }
  tape.Freeze(model.EncoderParams());
  Var rnnt = RnntLoss(tape, model, batch, topology);
  Var ilm = IlmLoss(tape, nets, batch);
  return Add(rnnt, Scale(ilm, alpha));
}

AlignedExample MakeAlignedExample(const RnntModel &model, const Utterance &utt,
                                  Topology topology) {
  AlignedExample ex;
  ex.id = utt.id;
  ex.labels = utt.labels;
  ex.encoded = model.Encode(utt.features);
  const PosteriorGrid grid =
      BuildPosteriorGridFromEncoded(model, ex.encoded, utt.labels, topology);
  ex.frames = ViterbiAlign(grid, utt.labels, topology).frames;
  return ex;
}

namespace {

struct MiniTerms {
  Var nll;           // -log P_ILM(a_1^S)
  Var cross_entropy;  // summed over positions
};

MiniTerms MiniIlmTerms(Tape &tape, RnntModel &model, MiniIlmNet &mini,
                       const AlignedExample &ex) {
  const size_t S = ex.labels.size();
  if (S == 0) throw ArgumentError("J' loss: empty transcription '" + ex.id + "'");
  Var pred = model.PredictionOutputs(tape, History(ex.labels));
  Var log_q = BlankFreeLogProbs(tape, model, pred, mini.Outputs(tape, ex.labels));
  MiniTerms out{PickedNll(log_q, ex.labels), Var{}};
  if (ex.frames.size() != S) {
    throw ArgumentError("J' loss: missing alignment for '" + ex.id + "'");
  }
  Array h(S, ex.encoded.cols());
  for (size_t s = 0; s < S; ++s) {
    if (ex.frames[s] >= ex.encoded.rows()) {
      throw ArgumentError("J' loss: frame out of range in '" + ex.id + "'");
    }
    auto src = ex.encoded.row(ex.frames[s]);
    std::copy(src.begin(), src.end(), h.row(s).begin());
  }
  const Array log_p = BlankFreeLogProbs(tape, model, pred, tape.Constant(h)).value();
  Array target(log_p.rows(), log_p.cols());
  for (size_t k = 0; k < log_p.size(); ++k) target[k] = std::exp(log_p[k]);
  out.cross_entropy = Scale(WeightedSum(log_q, target), -1.0);
  return out;
}

}  // namespace

Var JPrimeLoss(Tape &tape, RnntModel &model, MiniIlmNet &mini,
               std::span<const AlignedExample> batch) {
  tape.Freeze(model.Params());
  std::vector<Var> parts;
  double positions = 0;
  for (const AlignedExample &ex : batch) {
    parts.push_back(MiniIlmTerms(tape, model, mini, ex).cross_entropy);
    positions += static_cast<double>(ex.labels.size());
  }
  if (parts.empty()) throw ArgumentError("loss: empty batch");
  return Scale(Sum(ConcatRows(parts)), 1.0 / positions);
}

Var ExactIlmLoss(Tape &tape, RnntModel &model, MiniIlmNet &mini,
                 std::span<const AlignedExample> batch, double alpha) {
  if (alpha < 0) throw ArgumentError("exact ILM: alpha must be >= 0");
  tape.Freeze(model.Params());
  std::vector<Var> nll, ce;
  double positions = 0;
  for (const AlignedExample &ex : batch) {
    MiniTerms terms = MiniIlmTerms(tape, model, mini, ex);
    nll.push_back(terms.nll);
    ce.push_back(terms.cross_entropy);
    positions += static_cast<double>(ex.labels.size());
  }
  Var ilm = MeanOf(nll);
  Var jprime = Scale(Sum(ConcatRows(ce)), 1.0 / positions);
  return Add(ilm, Scale(jprime, alpha));
}

}  // namespace rnnt
