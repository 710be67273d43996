// include/rnnt/model.h
//
// Transducer networks (encoder, prediction network, joint network) and the
// label-only networks used around them: external LMs, the density-ratio LM
// and the mini-LSTM that produces an ILM context vector.

#ifndef RNNT_MODEL_H_
#define RNNT_MODEL_H_

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rnnt/array.h"
#include "rnnt/nn.h"
#include "rnnt/tape.h"
#include "rnnt/vocab.h"

namespace rnnt {

struct RnntConfig {
  size_t vocab_size = 20;
  size_t feature_dim = 8;
  size_t encoder_layers = 2;
  size_t encoder_units = 32;
  // Frames kept after the first encoder layer: 0, k, 2k, ...
  size_t subsampling = 1;
  size_t prediction_layers = 1;
  size_t prediction_units = 32;
  size_t embedding_dim = 16;
  size_t joint_units = 32;
  // false replaces the joint tanh by the identity, which makes the joint
  // additive in its two inputs.
  bool joint_tanh = true;

  bool operator==(const RnntConfig &) const = default;
};

struct PredictionState {
  std::vector<LstmState> layers;
  Array output;  // g, 1 x prediction_units; empty before the start symbol
  size_t consumed = 0;
};

class RnntModel {
 public:
  RnntModel() = default;
  RnntModel(const RnntConfig &config, Vocabulary vocab);

  void Initialize(uint64_t seed);
  void SetZero();

  const RnntConfig &config() const { return config_; }
  const Vocabulary &vocab() const { return vocab_; }
  uint64_t seed() const { return seed_; }
  void set_seed(uint64_t s) { seed_ = s; }
  size_t vocab_size() const { return config_.vocab_size; }
  // Blank sits after the labels in the joint output.
  int blank() const { return static_cast<int>(config_.vocab_size); }
  // Extra embedding row fed to the prediction network before any label.
  int start_symbol() const { return static_cast<int>(config_.vocab_size); }
  size_t encoder_dim() const { return config_.encoder_units; }
  size_t prediction_dim() const { return config_.prediction_units; }
  size_t EncodedLength(size_t frames) const;

  // Value path.
  Array Encode(const Array &features) const;
  PredictionState PredictInitial() const;
  PredictionState PredictStep(const PredictionState &state, int symbol) const;
  // Start symbol followed by `labels`.
  PredictionState PredictHistory(std::span<const int> labels) const;
  Array ProjectEncoder(const Array &h) const;
  Array ProjectPrediction(const Array &g) const;
  // Logits over V and blank from already projected rows.
  Array JointFromProjections(const Array &enc_proj, const Array &pred_proj) const;
  Array JointLogits(const Array &g, const Array &h) const;
  // Logits for every (t, s) pair; row t * pred.rows() + s.
  Array JointGrid(const Array &encoded, const Array &pred) const;
  Array JointLogitsNoBlank(const Array &g, const Array &h) const;

  // Tape path; parameters bind as trainable unless frozen on the tape.
  Var Encode(Tape &tape, const Array &features);
  // Rows g_0 .. g_S for the start symbol followed by each label.
  Var PredictionOutputs(Tape &tape, std::span<const int> labels);
  // Logits for every (t, s) pair; row t * pred.rows() + s.
  Var JointGrid(Tape &tape, Var enc, Var pred);
  // Logits pairing pred row i with enc row i.
  Var JointRows(Tape &tape, Var pred, Var enc);

  std::vector<Parameter *> Params();
  std::vector<Parameter *> EncoderParams();
  std::vector<Parameter *> PredictionParams();
  std::vector<Parameter *> JointParams();
  std::vector<const Parameter *> Params() const;

 private:
  Array JointOutput(Array pre) const;
  template <typename Self>
  static Var EncodeImpl(Self &self, Tape &tape, const Array &features);
  void CheckSymbol(int symbol, bool allow_start) const;

  RnntConfig config_;
  Vocabulary vocab_;
  uint64_t seed_ = 0;
  std::vector<LstmLayer> encoder_;
  Parameter embedding_;  // (V+1) x E, last row is the start symbol
  std::vector<LstmLayer> prediction_;
  Parameter joint_enc_;   // d_enc x J
  Parameter joint_pred_;  // d_pred x J
  Parameter joint_bias_;  // 1 x J
  Parameter joint_out_;   // J x (V+1)
  Parameter joint_out_bias_;  // 1 x (V+1)
};

// Per-step state of any label-level language model.
struct LmState {
  std::vector<LstmState> layers;  // recurrent models
  std::vector<int> context;       // n-gram models: most recent labels
  Array log_probs;                // 1 x (V+1), last entry is sentence end
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::string kind() const = 0;
  virtual const Vocabulary &vocab() const = 0;
  size_t vocab_size() const { return vocab().size(); }
  int eos() const { return static_cast<int>(vocab_size()); }

  // State after the sentence start, holding P(. | <s>).
  virtual LmState Start() const = 0;
  virtual LmState Step(const LmState &state, int label) const = 0;

  // log P(labels [, </s>]) by the chain rule.
  double SequenceLogProb(std::span<const int> labels,
                         bool include_eos = true) const;

 protected:
  void CheckLabel(int label) const;
};

struct RecurrentLmConfig {
  size_t vocab_size = 20;
  size_t embedding_dim = 16;
  size_t hidden_units = 32;
  size_t layers = 1;
  bool operator==(const RecurrentLmConfig &) const = default;
};

// Embedding + LSTM stack + projection over V and sentence end. Serves as
// the external LM and, with kind "density-ratio-lm", as the density-ratio
// ILM sharing the prediction network's architecture.
class RecurrentLm : public LanguageModel {
 public:
  static constexpr const char *kExternalKind = "external-lm-recurrent";
  static constexpr const char *kDensityRatioKind = "density-ratio-lm";

  RecurrentLm() = default;
  RecurrentLm(const RecurrentLmConfig &config, Vocabulary vocab,
              std::string kind = kExternalKind);

  void Initialize(uint64_t seed);
  std::string kind() const override { return kind_; }
  const Vocabulary &vocab() const override { return vocab_; }
  const RecurrentLmConfig &config() const { return config_; }
  uint64_t seed() const { return seed_; }
  void set_seed(uint64_t s) { seed_ = s; }

  LmState Start() const override;
  LmState Step(const LmState &state, int label) const override;

  // Logits rows for the contexts <s>, <s> a_1, ..., <s> a_1^S.
  Var Logits(Tape &tape, std::span<const int> labels);
  // -log P(labels, </s>) recorded on the tape.
  Var SequenceNll(Tape &tape, std::span<const int> labels);

  std::vector<Parameter *> Params();
  std::vector<const Parameter *> Params() const;

 private:
  LmState Feed(const LmState &state, int symbol) const;

  RecurrentLmConfig config_;
  Vocabulary vocab_;
  std::string kind_ = kExternalKind;
  uint64_t seed_ = 0;
  Parameter embedding_;  // (V+1) x E, last row is sentence start
  std::vector<LstmLayer> layers_;
  Parameter out_;       // H x (V+1)
  Parameter out_bias_;  // 1 x (V+1)
};

// Count-based n-gram LM with additive smoothing:
//   P(w | h) = (c(h, w) + delta) / (c(h) + delta * (|V| + 1)).
// Contexts without counts and delta = 0 fall back to uniform.
class NgramLm : public LanguageModel {
 public:
  static constexpr const char *kKind = "external-lm-ngram";

  NgramLm() = default;
  NgramLm(Vocabulary vocab, size_t order, double delta);

  std::string kind() const override { return kKind; }
  const Vocabulary &vocab() const override { return vocab_; }
  size_t order() const { return order_; }
  double delta() const { return delta_; }

  void AddSentence(std::span<const int> labels);
  // Adds `count` to c(context, next); `next` may be the sentence end.
  void AddCount(const std::vector<int> &context, int next, double count);

  LmState Start() const override;
  LmState Step(const LmState &state, int label) const override;

  // Context is padded with the start marker (= |V|) on the left.
  const std::map<std::vector<int>, std::vector<double>> &counts() const {
    return counts_;
  }

 private:
  Array Distribution(const std::vector<int> &context) const;

  Vocabulary vocab_;
  size_t order_ = 2;
  double delta_ = 1.0;
  std::map<std::vector<int>, std::vector<double>> counts_;
};

struct MiniIlmConfig {
  size_t vocab_size = 20;
  size_t embedding_dim = 16;
  size_t hidden_units = 16;
  size_t output_dim = 32;  // must equal the transducer encoder dimension
  bool operator==(const MiniIlmConfig &) const = default;
};

// Small LSTM mapping the label history to a vector h' that is fed into the
// joint network's encoder slot.
class MiniIlmNet {
 public:
  static constexpr const char *kKind = "mini-ilm";

  struct State {
    LstmState lstm;
    Array output;  // h', 1 x output_dim
  };

  MiniIlmNet() = default;
  MiniIlmNet(const MiniIlmConfig &config, Vocabulary vocab);

  void Initialize(uint64_t seed);
  const MiniIlmConfig &config() const { return config_; }
  const Vocabulary &vocab() const { return vocab_; }
  uint64_t seed() const { return seed_; }
  void set_seed(uint64_t s) { seed_ = s; }

  // h' for the empty history.
  State Start() const;
  State Step(const State &state, int label) const;

  // Rows h'(a_1^{s-1}) for s = 1..S.
  Var Outputs(Tape &tape, std::span<const int> labels);

  // Output projection, exposed so tests can pin h' to chosen vectors.
  Parameter &output_weight() { return out_; }
  Parameter &output_bias() { return out_bias_; }

  std::vector<Parameter *> Params();
  std::vector<const Parameter *> Params() const;

 private:
  State Feed(const State &state, int symbol) const;

  MiniIlmConfig config_;
  Vocabulary vocab_;
  uint64_t seed_ = 0;
  Parameter embedding_;  // (V+1) x E, last row is the start symbol
  LstmLayer lstm_;
  Parameter out_;       // H x output_dim
  Parameter out_bias_;  // 1 x output_dim
};

}  // namespace rnnt

#endif  // RNNT_MODEL_H_
