// src/ilm.cc

#include "rnnt/ilm.h"

#include "rnnt/error.h"

namespace rnnt {

std::string IlmKindName(IlmKind kind) {
  switch (kind) {
    case IlmKind::kNone: return "none";
    case IlmKind::kDensityRatio: return "density-ratio";
    case IlmKind::kZero: return "zero";
    case IlmKind::kAvg: return "avg";
    case IlmKind::kMiniLstm: return "mini-lstm";
  }
  return "none";
}

IlmKind ParseIlmKind(const std::string &name) {
  for (IlmKind k : {IlmKind::kNone, IlmKind::kDensityRatio, IlmKind::kZero,
                    IlmKind::kAvg, IlmKind::kMiniLstm}) {
    if (IlmKindName(k) == name) return k;
  }
  throw ArgumentError("unknown ILM variant '" + name + "'");
}

void IlmVariant::Validate(const RnntModel &model) const {
  if (kind == IlmKind::kDensityRatio) {
    if (density_ratio == nullptr) {
      throw ArgumentError("density-ratio ILM needs a density-ratio LM");
    }
    if (density_ratio->vocab() != model.vocab()) {
      throw DimensionError("density-ratio LM vocabulary differs from model");
    }
  }
  if (kind == IlmKind::kMiniLstm) {
    if (mini == nullptr) throw ArgumentError("mini-lstm ILM needs a mini-ILM net");
    if (mini->vocab() != model.vocab()) {
      throw DimensionError("mini-ILM vocabulary differs from model");
    }
    if (mini->config().output_dim != model.encoder_dim()) {
      throw DimensionError("mini-ILM output dim " +
                           std::to_string(mini->config().output_dim) +
                           " != encoder dim " +
                           std::to_string(model.encoder_dim()));
    }
  }
}

Array IlmLogProbsFromPrediction(const RnntModel &model, const Array &g,
                                const Array &h_prime) {
  return kernels::LogSoftmaxRows(model.JointLogitsNoBlank(g, h_prime));
}

Array DropEos(const Array &log_probs) {
  Array out = kernels::SliceCols(log_probs, 0, log_probs.cols() - 1);
  const double norm = kernels::LogSumExp(out.data());
  for (double &v : out.data()) v -= norm;
  return out;
}

namespace {

void Refresh(const IlmVariant &variant, const RnntModel &model, IlmState &st) {
  switch (variant.kind) {
    case IlmKind::kNone:
      break;
    case IlmKind::kDensityRatio:
      st.log_probs = DropEos(st.lm.log_probs);
      break;
    case IlmKind::kZero:
    case IlmKind::kAvg:
      st.log_probs = IlmLogProbsFromPrediction(model, st.prediction.output,
                                               st.h_prime);
      break;
    case IlmKind::kMiniLstm:
      st.log_probs = IlmLogProbsFromPrediction(model, st.prediction.output,
                                               st.mini.output);
      break;
  }
}

}  // namespace

IlmState IlmInit(const IlmVariant &variant, const RnntModel &model,
                 const Array *encoded) {
  variant.Validate(model);
  IlmState st;
  switch (variant.kind) {
    case IlmKind::kNone:
      return st;
    case IlmKind::kDensityRatio:
      st.lm = variant.density_ratio->Start();
      break;
    case IlmKind::kAvg:
      if (encoded == nullptr || encoded->rows() == 0) {
        throw ArgumentError("avg ILM needs the utterance's encoder output");
      }
      st.h_prime = kernels::MeanRows(*encoded);
      break;
    case IlmKind::kZero:
      st.h_prime = Array(1, model.encoder_dim());
      break;
    case IlmKind::kMiniLstm:
      st.mini = variant.mini->Start();
      break;
  }
  if (variant.kind != IlmKind::kDensityRatio) {
    st.prediction = model.PredictStep(model.PredictInitial(),
                                      model.start_symbol());
  }
  Refresh(variant, model, st);
  return st;
}

IlmState IlmAdvance(const IlmVariant &variant, const RnntModel &model,
                    const IlmState &state, int label) {
  if (label < 0 || static_cast<size_t>(label) >= model.vocab_size()) {
    throw ArgumentError("ilm: label " + std::to_string(label) + " out of range");
  }
  IlmState st;
  st.consumed = state.consumed + 1;
  switch (variant.kind) {
    case IlmKind::kNone:
      return st;
    case IlmKind::kDensityRatio:
      st.lm = variant.density_ratio->Step(state.lm, label);
      break;
    case IlmKind::kMiniLstm:
      st.mini = variant.mini->Step(state.mini, label);
      [[fallthrough]];
    case IlmKind::kZero:
    case IlmKind::kAvg:
      st.h_prime = state.h_prime;
      st.prediction = model.PredictStep(state.prediction, label);
      break;
  }
  Refresh(variant, model, st);
  return st;
}

double IlmSequenceLogProb(const IlmVariant &variant, const RnntModel &model,
                          std::span<const int> labels, const Array *encoded) {
  if (variant.kind == IlmKind::kNone) return 0.0;
  IlmState st = IlmInit(variant, model, encoded);
  double total = 0.0;
  for (size_t s = 0; s < labels.size(); ++s) {
    if (s > 0) st = IlmAdvance(variant, model, st, labels[s - 1]);
    if (labels[s] < 0 || static_cast<size_t>(labels[s]) >= model.vocab_size()) {
      throw ArgumentError("ilm: label " + std::to_string(labels[s]) +
                          " out of range");
    }
    total += st.log_probs[labels[s]];
  }
  return total;
}

}  // namespace rnnt
