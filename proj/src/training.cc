// src/training.cc

#include "rnnt/training.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "rnnt/error.h"

namespace rnnt {
namespace {

using BatchLoss = std::function<Var(Tape &, std::span<const size_t>)>;

std::vector<Array> Snapshot(const std::vector<Parameter *> &params) {
  std::vector<Array> out;
  for (const Parameter *p : params) out.push_back(p->value);
  return out;
}

void Restore(const std::vector<Parameter *> &params,
             const std::vector<Array> &values) {
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

TrainCurve Loop(size_t n, const TrainConfig &config,
                const std::vector<Parameter *> &params, const BatchLoss &loss,
                const DevMetric &dev_metric) {
  if (n == 0) throw ArgumentError("training: empty corpus");
  if (config.batch_size == 0) throw ArgumentError("training: batch size 0");
  std::mt19937_64 rng(config.seed);
  Sgd sgd(config.learning_rate, config.clip);
  ZeroGrads(params);

  TrainCurve curve;
  double best = dev_metric ? dev_metric() : 0.0;
  std::vector<Array> best_values = Snapshot(params);
  size_t since_best = 0;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    size_t batches = 0;
    for (size_t b = 0; b < n; b += config.batch_size) {
      const size_t e = std::min(n, b + config.batch_size);
      Tape tape;
      Var l = loss(tape, std::span<const size_t>(order).subspan(b, e - b));
      tape.Backward(l);
      sgd.Step(params);
      total += l.value()[0];
      ++batches;
    }
    EpochRecord rec{epoch, total / static_cast<double>(batches)};
    if (dev_metric) {
      rec.dev_metric = dev_metric();
      if (rec.dev_metric < best) {
        best = rec.dev_metric;
        best_values = Snapshot(params);
        curve.best_epoch = epoch;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      curve.best_epoch = epoch;
    }
    curve.epochs.push_back(rec);
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  if (dev_metric) Restore(params, best_values);
  return curve;
}

template <typename T>
std::vector<T> Pick(const std::vector<T> &all, std::span<const size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace

TrainCurve TrainRnnt(RnntModel &model, const std::vector<Utterance> &train,
                     Topology topology, const TrainConfig &config,
                     const DevMetric &dev_metric) {
  return Loop(train.size(), config, model.Params(),
              [&](Tape &tape, std::span<const size_t> idx) {
                const auto batch = Pick(train, idx);
                return RnntLoss(tape, model, batch, topology);
              },
              dev_metric);
}

TrainCurve FineTuneIlmt(RnntModel &model, const std::vector<Utterance> &train,
                        Topology topology, IlmKind kind, double alpha,
                        const TrainConfig &config, const DevMetric &dev_metric,
                        MiniIlmNet *mini) {
  IlmNetworks nets{kind, &model, mini, nullptr};
  std::vector<Parameter *> params = model.PredictionParams();
  for (Parameter *p : model.JointParams()) params.push_back(p);
  if (kind == IlmKind::kMiniLstm) {
    if (mini == nullptr) throw ArgumentError("ILMT with mini-lstm needs the net");
    for (Parameter *p : mini->Params()) params.push_back(p);
  }
  return Loop(train.size(), config, params,
              [&](Tape &tape, std::span<const size_t> idx) {
                const auto batch = Pick(train, idx);
                return IlmtLoss(tape, model, nets, batch, topology, alpha);
              },
              dev_metric);
}

TrainCurve TrainRecurrentLm(RecurrentLm &lm,
                            const std::vector<std::vector<int>> &train,
                            const std::vector<std::vector<int>> &dev,
                            const TrainConfig &config) {
  DevMetric metric;
  if (!dev.empty()) {
    metric = [&] {
      double total = 0.0;
      for (const auto &seq : dev) total -= lm.SequenceLogProb(seq, true);
      return total / static_cast<double>(dev.size());
    };
  }
  return Loop(train.size(), config, lm.Params(),
              [&](Tape &tape, std::span<const size_t> idx) {
                std::vector<Var> parts;
                for (size_t i : idx) parts.push_back(lm.SequenceNll(tape, train[i]));
                return Scale(Sum(ConcatRows(parts)),
                             1.0 / static_cast<double>(parts.size()));
              },
              metric);
}

NgramLm TrainNgramLm(const Vocabulary &vocab,
                     const std::vector<std::vector<int>> &sentences,
                     size_t order, double delta) {
  NgramLm lm(vocab, order, delta);
  for (const auto &s : sentences) lm.AddSentence(s);
  return lm;
}

TrainCurve TrainMiniIlm(const RnntModel &model, MiniIlmNet &mini,
                        const std::vector<AlignedExample> &train,
                        const std::vector<AlignedExample> &dev,
                        MiniIlmLoss loss, double alpha,
                        const TrainConfig &config) {
  if (mini.config().output_dim != model.encoder_dim()) {
    throw DimensionError("mini-ILM output dim does not match encoder dim");
  }
  if (loss == MiniIlmLoss::kExact) {
    for (const auto &ex : train) {
      if (ex.frames.size() != ex.labels.size()) {
        throw ArgumentError("exact ILM training: missing alignment for '" +
                            ex.id + "'");
      }
    }
  }
  // A private copy keeps the caller's transducer untouched by construction;
  // the losses additionally freeze it on every tape.
  RnntModel frozen = model;
  IlmNetworks nets{IlmKind::kMiniLstm, &frozen, &mini, nullptr};
  DevMetric metric;
  if (!dev.empty()) {
    metric = [&] {
      const IlmVariant v{IlmKind::kMiniLstm, nullptr, &mini};
      double total = 0.0;
      for (const auto &ex : dev) total -= IlmSequenceLogProb(v, frozen, ex.labels);
      return total / static_cast<double>(dev.size());
    };
  }
  return Loop(train.size(), config, mini.Params(),
              [&](Tape &tape, std::span<const size_t> idx) {
                const auto batch = Pick(train, idx);
                if (loss == MiniIlmLoss::kExact) {
                  return ExactIlmLoss(tape, frozen, mini, batch, alpha);
                }
                tape.Freeze(frozen.Params());
                std::vector<Var> parts;
                for (const auto &ex : batch) {
                  parts.push_back(IlmSequenceNll(tape, nets, ex.labels, nullptr));
                }
                return Scale(Sum(ConcatRows(parts)),
                             1.0 / static_cast<double>(parts.size()));
              },
              metric);
}

}  // namespace rnnt
