// include/rnnt/workbench.h
//
// Experiment configuration and the pipeline stages behind the command-line
// tool: data generation, training of every network, decoding over a corpus
// split, scale sweeps and the fusion-method comparisons.

#ifndef RNNT_WORKBENCH_H_
#define RNNT_WORKBENCH_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnnt/corpus.h"
#include "rnnt/decoder.h"
#include "rnnt/eval.h"
#include "rnnt/training.h"

namespace rnnt {

struct RangeSpec {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  std::vector<double> Values() const { return ScaleRange(lo, hi, step); }
  bool operator==(const RangeSpec &) const = default;
};
// "lo:hi:step"; ArgumentError otherwise.
RangeSpec ParseRange(const std::string &text);

struct ExperimentConfig {
  uint64_t seed = 1;

  // Default locations; RNNT_ILM_DATA_DIR, RNNT_ILM_MODEL_DIR and
  // RNNT_ILM_OUTPUT_DIR override them.
  struct Paths {
    std::string data = "run/data";
    std::string models = "run/models";
    std::string outputs = "run/outputs";
  } paths;

  // Source domain trains the transducer; target domain supplies the
  // external LM text and the evaluation sets. Both share labels and
  // prototypes but use independently drawn chains.
  struct Data {
    size_t vocab_size = 20;
    size_t feature_dim = 8;
    double noise = 0.6;
    size_t min_length = 3;
    size_t max_length = 8;
    size_t min_duration = 1;
    size_t max_duration = 3;
    ChainShape chain;
    SplitSizes sizes;
    size_t text_sentences = 20000;
    size_t text_dev_sentences = 1000;
  } data;

  Topology topology = Topology::kMonotonic;
  RnntConfig model;
  size_t mini_hidden_units = 16;
  size_t mini_embedding_dim = 16;

  struct Lm {
    std::string type = "ngram";  // "ngram" or "recurrent"
    size_t order = 2;
    double delta = 0.1;
    RecurrentLmConfig recurrent;
  } lm;
  RecurrentLmConfig density_ratio;

  TrainConfig rnnt_training{0.5, 5.0, 12, 8, 1, 0};
  TrainConfig lm_training{0.5, 5.0, 10, 8, 1, 2};
  TrainConfig ilm_training{0.1, 5.0, 20, 8, 1, 3};
  TrainConfig ilmt_training{0.1, 5.0, 5, 8, 1, 0};
  double ilmt_alpha = 0.2;
  // 1.0 suits in-domain evaluation; cross-domain runs use 2.0.
  double exact_alpha = 1.0;
  // Beam used when selecting transducer checkpoints by no-LM dev WER.
  size_t selection_beam = 4;

  FusionConfig decode;  // beam, score beam, recombination and defaults
  RangeSpec lm_scale_range{0.0, 1.2, 0.05};
  RangeSpec ilm_scale_range{0.0, 0.8, 0.05};
  RangeSpec length_reward_range{0.0, 2.0, 0.25};

  size_t workers = 1;

  // ArgumentError naming the offending field.
  void Validate() const;
};

nlohmann::json ToJson(const ExperimentConfig &config);
// Missing keys keep their defaults; unknown keys are an ArgumentError.
ExperimentConfig ConfigFromJson(const nlohmann::json &json);
ExperimentConfig LoadConfig(const std::string &path);
void SaveConfig(const std::string &path, const ExperimentConfig &config);
// Applies the path environment overrides.
void ApplyEnvironment(ExperimentConfig &config);

nlohmann::json ToJson(const FusionConfig &config);

// Seeds of every random stage, derived from the experiment seed.
struct StageSeeds {
  uint64_t prototypes, source_chain, target_chain, source_corpus,
      target_corpus, target_text, target_text_dev, rnnt, lm, density_ratio, mini, ilmt;
};
StageSeeds DeriveSeeds(uint64_t seed);

struct DomainPair {
  DomainSpec source;
  DomainSpec target;
};
DomainPair MakeDomains(const ExperimentConfig &config);

struct DataSet {
  Corpus source;  // transducer training, in-domain dev/test
  Corpus target;  // cross-domain dev/test; its train split is unused
  std::vector<std::vector<int>> target_text;
  std::vector<std::vector<int>> target_text_dev;
};
DataSet GenerateData(const ExperimentConfig &config);
// data/source, data/target, target-text.txt, target-text-dev.txt
void SaveDataSet(const std::string &dir, const DataSet &data);
DataSet LoadDataSet(const std::string &dir);

std::vector<std::vector<int>> Transcriptions(const std::vector<Utterance> &utts);

// Decoding over a corpus split. Each utterance is scored once and searched
// under every config; results are indexed [config][utterance].
std::vector<std::vector<DecodeResult>> DecodeCorpus(
    const DecodeResources &resources, const std::vector<Utterance> &utts,
    const std::vector<FusionConfig> &configs, Topology topology,
    size_t workers);
// Corpus error counts per config.
std::vector<ErrorCounts> ScoreCorpus(const DecodeResources &resources,
                                     const std::vector<Utterance> &utts,
                                     const std::vector<FusionConfig> &configs,
                                     Topology topology, size_t workers);

// Trains from `config.model` with per-epoch no-LM dev WER selection.
TrainCurve TrainBaseModel(const ExperimentConfig &config, const Corpus &corpus,
                          RnntModel &model);
std::unique_ptr<LanguageModel> TrainExternalLm(
    const ExperimentConfig &config, const Vocabulary &vocab,
    const std::vector<std::vector<int>> &text,
    const std::vector<std::vector<int>> &dev);
RecurrentLm TrainDensityRatioLm(const ExperimentConfig &config,
                                const Corpus &corpus);

std::vector<AlignmentRecord> AlignCorpus(const RnntModel &model,
                                         const std::vector<Utterance> &utts,
                                         Topology topology);
// Pairs records with utterances by id and attaches the encoder output.
std::vector<AlignedExample> AttachAlignments(
    const RnntModel &model, const std::vector<Utterance> &utts,
    const std::vector<AlignmentRecord> &records);

MiniIlmNet TrainMiniIlmNet(const ExperimentConfig &config,
                           const RnntModel &model,
                           const std::vector<AlignedExample> &train,
                           const std::vector<AlignedExample> &dev,
                           MiniIlmLoss loss, double alpha,
                           TrainCurve *curve = nullptr);

// L_ILMT fine-tuning of a copy of `base`. For mini-lstm, `mini` is
// fine-tuned jointly.
RnntModel TrainIlmtModel(const ExperimentConfig &config, const RnntModel &base,
                         const Corpus &corpus, IlmKind kind,
                         MiniIlmNet *mini = nullptr,
                         TrainCurve *curve = nullptr);

// Dev-tuned comparison of fusion methods. Each method sweeps lambda1 (and
// lambda2 when it has an ILM) on `dev` and reports the optimum on `test`.
struct MethodSpec {
  std::string name;
  DecodeResources resources;
  FusionConfig base;
  bool sweep_lm_scale = true;
  bool sweep_ilm_scale = true;
};
struct MethodResult {
  std::string name;
  FusionConfig tuned;
  ErrorCounts dev;
  ErrorCounts test;
};
std::vector<MethodResult> CompareMethods(const ExperimentConfig &config,
                                         const std::vector<MethodSpec> &methods,
                                         const std::vector<Utterance> &dev,
                                         const std::vector<Utterance> &test);
Table ComparisonTable(const std::vector<MethodResult> &rows);

// The six rows of the length-reward / renorm-eps analysis with h'_zero:
// SF, SF + reward, renorm-eps, renorm-eps + reward, ILM correction,
// ILM correction + reward. Reward rows reuse lambda2 of the row above.
std::vector<AnalysisSpec> StandardAnalysis(const ExperimentConfig &config);
BatchEvaluator CorpusEvaluator(const DecodeResources &resources,
                               const std::vector<Utterance> &utts,
                               Topology topology, size_t workers);

}  // namespace rnnt

#endif  // RNNT_WORKBENCH_H_
