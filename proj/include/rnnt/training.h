// include/rnnt/training.h
//
// SGD loops for every trainable network. Each epoch shuffles the examples
// with the config seed, steps once per batch and then evaluates a dev metric
// (lower is better). The parameters of the best epoch are restored at the
// end.

#ifndef RNNT_TRAINING_H_
#define RNNT_TRAINING_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "rnnt/losses.h"

namespace rnnt {

struct TrainConfig {
  double learning_rate = 0.1;
  double clip = 5.0;
  size_t epochs = 10;
  size_t batch_size = 8;
  uint64_t seed = 1;
  // Stop after this many epochs without a dev improvement; 0 disables.
  size_t patience = 0;
};

struct EpochRecord {
  size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean batch loss over the epoch
  double dev_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainCurve {
  std::vector<EpochRecord> epochs;
  size_t best_epoch = 0;  // 0 when the initial parameters were kept
};

using DevMetric = std::function<double()>;

// L_RNNT. `dev_metric` may be empty, in which case the last epoch is kept.
TrainCurve TrainRnnt(RnntModel &model, const std::vector<Utterance> &train,
                     Topology topology, const TrainConfig &config,
                     const DevMetric &dev_metric = {});

// L_ILMT fine-tuning of f^pred and J; the encoder stays fixed.
TrainCurve FineTuneIlmt(RnntModel &model, const std::vector<Utterance> &train,
                        Topology topology, IlmKind kind, double alpha,
                        const TrainConfig &config,
                        const DevMetric &dev_metric = {},
                        MiniIlmNet *mini = nullptr);

// Recurrent LM (external or density-ratio) on label sequences; the dev
// metric is the mean per-sequence NLL including sentence end.
TrainCurve TrainRecurrentLm(RecurrentLm &lm,
                            const std::vector<std::vector<int>> &train,
                            const std::vector<std::vector<int>> &dev,
                            const TrainConfig &config);

NgramLm TrainNgramLm(const Vocabulary &vocab,
                     const std::vector<std::vector<int>> &sentences,
                     size_t order, double delta);

enum class MiniIlmLoss { kPlain, kExact };

// Trains f_ILM against a fixed transducer: L_ILM (plain) or
// L_ILM + alpha * L_J' (exact, needs frames on every example). The dev
// metric is the mean mini-lstm ILM NLL per sequence.
TrainCurve TrainMiniIlm(const RnntModel &model, MiniIlmNet &mini,
                        const std::vector<AlignedExample> &train,
                        const std::vector<AlignedExample> &dev,
                        MiniIlmLoss loss, double alpha,
                        const TrainConfig &config);

}  // namespace rnnt

#endif  // RNNT_TRAINING_H_
