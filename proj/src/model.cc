// src/model.cc

#include "rnnt/model.h"

#include <cmath>

#include "rnnt/error.h"

namespace rnnt {
namespace {

template <typename T>
std::vector<const Parameter *> AsConst(std::vector<Parameter *> params) {
  return {params.begin(), params.end()};
}

Array EmbeddingRow(const Parameter &table, int symbol) {
  return kernels::TakeRow(table.value, static_cast<size_t>(symbol));
}

}  // namespace

// ---------------------------------------------------------------------------
// RnntModel

RnntModel::RnntModel(const RnntConfig &config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)) {
  if (config_.vocab_size == 0) throw ArgumentError("rnnt: empty vocabulary");
  if (vocab_.size() != config_.vocab_size) {
    throw DimensionError("rnnt: vocabulary has " +
                         std::to_string(vocab_.size()) +
                         " labels but config says " +
                         std::to_string(config_.vocab_size));
  }
  if (config_.encoder_layers == 0 || config_.prediction_layers == 0) {
    throw ArgumentError("rnnt: encoder and prediction need at least one layer");
  }
  if (config_.subsampling == 0) throw ArgumentError("rnnt: subsampling must be >= 1");
  size_t in = config_.feature_dim;
  for (size_t l = 0; l < config_.encoder_layers; ++l) {
    encoder_.emplace_back("encoder." + std::to_string(l), in,
                          config_.encoder_units);
    in = config_.encoder_units;
  }
  embedding_ = Parameter("prediction.embedding", config_.vocab_size + 1,
                         config_.embedding_dim);
  in = config_.embedding_dim;
  for (size_t l = 0; l < config_.prediction_layers; ++l) {
    prediction_.emplace_back("prediction." + std::to_string(l), in,
                             config_.prediction_units);
    in = config_.prediction_units;
  }
  joint_enc_ = Parameter("joint.enc", config_.encoder_units, config_.joint_units);
  joint_pred_ =
      Parameter("joint.pred", config_.prediction_units, config_.joint_units);
  joint_bias_ = Parameter("joint.bias", 1, config_.joint_units);
  joint_out_ = Parameter("joint.out", config_.joint_units, config_.vocab_size + 1);
  joint_out_bias_ = Parameter("joint.out_bias", 1, config_.vocab_size + 1);
}

void RnntModel::Initialize(uint64_t seed) {
  seed_ = seed;
  InitializeUniform(Params(), seed);
}

void RnntModel::SetZero() {
  for (Parameter *p : Params()) {
    p->value.Fill(0.0);
    p->ZeroGrad();
  }
}

size_t RnntModel::EncodedLength(size_t frames) const {
  return (frames + config_.subsampling - 1) / config_.subsampling;
}

std::vector<Parameter *> RnntModel::EncoderParams() {
  std::vector<Parameter *> out;
  for (auto &l : encoder_) {
    for (Parameter *p : l.Params()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter *> RnntModel::PredictionParams() {
  std::vector<Parameter *> out{&embedding_};
  for (auto &l : prediction_) {
    for (Parameter *p : l.Params()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter *> RnntModel::JointParams() {
  return {&joint_enc_, &joint_pred_, &joint_bias_, &joint_out_,
          &joint_out_bias_};
}

std::vector<Parameter *> RnntModel::Params() {
  std::vector<Parameter *> out = EncoderParams();
  for (Parameter *p : PredictionParams()) out.push_back(p);
  for (Parameter *p : JointParams()) out.push_back(p);
  return out;
}

std::vector<const Parameter *> RnntModel::Params() const {
  return AsConst<Parameter>(const_cast<RnntModel *>(this)->Params());
}

void RnntModel::CheckSymbol(int symbol, bool allow_start) const {
  const int limit = static_cast<int>(config_.vocab_size) + (allow_start ? 1 : 0);
  if (symbol < 0 || symbol >= limit) {
    throw ArgumentError("rnnt: label " + std::to_string(symbol) +
                        " out of range for vocabulary of size " +
                        std::to_string(config_.vocab_size));
  }
}

template <typename Self>
Var RnntModel::EncodeImpl(Self &self, Tape &tape, const Array &features) {
  const RnntConfig &cfg = self.config_;
  if (features.rows() == 0) throw ArgumentError("encode: empty feature sequence");
  if (features.cols() != cfg.feature_dim) {
    throw ShapeError("encode: features " + features.ShapeString() +
                     " but model expects dimension " +
                     std::to_string(cfg.feature_dim));
  }
  Var x = tape.Constant(features);
  for (size_t l = 0; l < self.encoder_.size(); ++l) {
    x = self.encoder_[l].Sequence(tape, x);
    if (l == 0 && cfg.subsampling > 1) {
      std::vector<int> keep;
      for (size_t t = 0; t < x.rows(); t += cfg.subsampling) {
        keep.push_back(static_cast<int>(t));
      }
      x = EmbedLookup(x, keep);
    }
  }
  return x;
}

// The value path runs the tape code with constant parameters so decoding sees
// exactly the encoder outputs used in training.
Array RnntModel::Encode(const Array &features) const {
  Tape tape;
  return EncodeImpl(*this, tape, features).value();
}

Var RnntModel::Encode(Tape &tape, const Array &features) {
  return EncodeImpl(*this, tape, features);
}

PredictionState RnntModel::PredictInitial() const {
  PredictionState s;
  for (const auto &l : prediction_) s.layers.push_back(l.ZeroState());
  return s;
}

PredictionState RnntModel::PredictStep(const PredictionState &state,
                                       int symbol) const {
  CheckSymbol(symbol, /*allow_start=*/true);
  PredictionState next;
  Array x = EmbeddingRow(embedding_, symbol);
  for (size_t l = 0; l < prediction_.size(); ++l) {
    next.layers.push_back(prediction_[l].Step(x, state.layers[l]));
    x = next.layers.back().h;
  }
  next.output = std::move(x);
  next.consumed = state.consumed + 1;
  return next;
}

PredictionState RnntModel::PredictHistory(std::span<const int> labels) const {
  PredictionState s = PredictStep(PredictInitial(), start_symbol());
  for (int a : labels) {
    CheckSymbol(a, /*allow_start=*/false);
    s = PredictStep(s, a);
  }
  return s;
}

Array RnntModel::ProjectEncoder(const Array &h) const {
  return kernels::MatMul(h, joint_enc_.value);
}

Array RnntModel::ProjectPrediction(const Array &g) const {
  return kernels::AddRow(kernels::MatMul(g, joint_pred_.value),
                         joint_bias_.value);
}

Array RnntModel::JointOutput(Array pre) const {
  if (config_.joint_tanh) pre = kernels::Tanh(pre);
  return kernels::AddRow(kernels::MatMul(pre, joint_out_.value),
                         joint_out_bias_.value);
}

Array RnntModel::JointFromProjections(const Array &enc_proj,
                                      const Array &pred_proj) const {
  return JointOutput(kernels::Add(enc_proj, pred_proj));
}

Array RnntModel::JointGrid(const Array &encoded, const Array &pred) const {
  return JointOutput(kernels::PairwiseRowSum(ProjectEncoder(encoded),
                                             ProjectPrediction(pred)));
}

Array RnntModel::JointLogits(const Array &g, const Array &h) const {
  if (g.cols() != prediction_dim() || h.cols() != encoder_dim() ||
      g.rows() != h.rows()) {
    throw ShapeError("joint: prediction " + g.ShapeString() + " and encoder " +
                     h.ShapeString() + " do not fit joint of dims (" +
                     std::to_string(prediction_dim()) + ", " +
                     std::to_string(encoder_dim()) + ")");
  }
  return JointFromProjections(ProjectEncoder(h), ProjectPrediction(g));
}

Array RnntModel::JointLogitsNoBlank(const Array &g, const Array &h) const {
  return kernels::SliceCols(JointLogits(g, h), 0, config_.vocab_size);
}

Var RnntModel::PredictionOutputs(Tape &tape, std::span<const int> labels) {
  std::vector<int> ids{start_symbol()};
  for (int a : labels) {
    CheckSymbol(a, /*allow_start=*/false);
    ids.push_back(a);
  }
  Var x = EmbedLookup(tape.Param(embedding_), ids);
  for (auto &layer : prediction_) x = layer.Sequence(tape, x);
  return x;
}

Var RnntModel::JointGrid(Tape &tape, Var enc, Var pred) {
  Var e = MatMul(enc, tape.Param(joint_enc_));
  Var p = AddRow(MatMul(pred, tape.Param(joint_pred_)), tape.Param(joint_bias_));
  Var pre = PairwiseRowSum(e, p);
  if (config_.joint_tanh) pre = Tanh(pre);
  return AddRow(MatMul(pre, tape.Param(joint_out_)),
                tape.Param(joint_out_bias_));
}

Var RnntModel::JointRows(Tape &tape, Var pred, Var enc) {
  if (pred.rows() != enc.rows()) {
    throw ShapeError("joint-rows: " + pred.value().ShapeString() + " vs " +
                     enc.value().ShapeString());
  }
  Var e = MatMul(enc, tape.Param(joint_enc_));
  Var p = AddRow(MatMul(pred, tape.Param(joint_pred_)), tape.Param(joint_bias_));
  Var pre = Add(e, p);
  if (config_.joint_tanh) pre = Tanh(pre);
  return AddRow(MatMul(pre, tape.Param(joint_out_)),
                tape.Param(joint_out_bias_));
}

// ---------------------------------------------------------------------------
// LanguageModel

void LanguageModel::CheckLabel(int label) const {
  if (label < 0 || static_cast<size_t>(label) >= vocab_size()) {
    throw ArgumentError(kind() + ": label " + std::to_string(label) +
                        " out of range for vocabulary of size " +
                        std::to_string(vocab_size()));
  }
}

double LanguageModel::SequenceLogProb(std::span<const int> labels,
                                      bool include_eos) const {
  LmState s = Start();
  double total = 0.0;
  for (int a : labels) {
    CheckLabel(a);
    total += s.log_probs[a];
    s = Step(s, a);
  }
  if (include_eos) total += s.log_probs[eos()];
  return total;
}

// ---------------------------------------------------------------------------
// RecurrentLm

RecurrentLm::RecurrentLm(const RecurrentLmConfig &config, Vocabulary vocab,
                         std::string kind)
    : config_(config), vocab_(std::move(vocab)), kind_(std::move(kind)) {
  if (vocab_.size() != config_.vocab_size) {
    throw DimensionError(kind_ + ": vocabulary has " +
                         std::to_string(vocab_.size()) +
                         " labels but config says " +
                         std::to_string(config_.vocab_size));
  }
  if (config_.layers == 0) throw ArgumentError(kind_ + ": needs a layer");
  embedding_ =
      Parameter(kind_ + ".embedding", config_.vocab_size + 1, config_.embedding_dim);
  size_t in = config_.embedding_dim;
  for (size_t l = 0; l < config_.layers; ++l) {
    layers_.emplace_back(kind_ + "." + std::to_string(l), in,
                         config_.hidden_units);
    in = config_.hidden_units;
  }
  out_ = Parameter(kind_ + ".out", config_.hidden_units, config_.vocab_size + 1);
  out_bias_ = Parameter(kind_ + ".out_bias", 1, config_.vocab_size + 1);
}

void RecurrentLm::Initialize(uint64_t seed) {
  seed_ = seed;
  InitializeUniform(Params(), seed);
}

std::vector<Parameter *> RecurrentLm::Params() {
  std::vector<Parameter *> out{&embedding_};
  for (auto &l : layers_) {
    for (Parameter *p : l.Params()) out.push_back(p);
  }
  out.push_back(&out_);
  out.push_back(&out_bias_);
  return out;
}

std::vector<const Parameter *> RecurrentLm::Params() const {
  return AsConst<Parameter>(const_cast<RecurrentLm *>(this)->Params());
}

LmState RecurrentLm::Feed(const LmState &state, int symbol) const {
  LmState next;
  Array x = EmbeddingRow(embedding_, symbol);
  for (size_t l = 0; l < layers_.size(); ++l) {
    next.layers.push_back(layers_[l].Step(x, state.layers[l]));
    x = next.layers.back().h;
  }
  next.log_probs = kernels::LogSoftmaxRows(
      kernels::AddRow(kernels::MatMul(x, out_.value), out_bias_.value));
  return next;
}

LmState RecurrentLm::Start() const {
  LmState zero;
  for (const auto &l : layers_) zero.layers.push_back(l.ZeroState());
  return Feed(zero, static_cast<int>(config_.vocab_size));
}

LmState RecurrentLm::Step(const LmState &state, int label) const {
  CheckLabel(label);
  return Feed(state, label);
}

Var RecurrentLm::Logits(Tape &tape, std::span<const int> labels) {
  std::vector<int> ids{static_cast<int>(config_.vocab_size)};
  for (int label : labels) {
    CheckLabel(label);
    ids.push_back(label);
  }
  Var x = EmbedLookup(tape.Param(embedding_), ids);
  for (auto &layer : layers_) x = layer.Sequence(tape, x);
  return AddRow(MatMul(x, tape.Param(out_)), tape.Param(out_bias_));
}

Var RecurrentLm::SequenceNll(Tape &tape, std::span<const int> labels) {
  std::vector<std::pair<size_t, size_t>> targets;
  for (size_t s = 0; s < labels.size(); ++s) {
    targets.emplace_back(s, static_cast<size_t>(labels[s]));
  }
  targets.emplace_back(labels.size(), static_cast<size_t>(eos()));
  Var logp = LogSoftmax(Logits(tape, labels));
  return Scale(Sum(Gather(logp, targets)), -1.0);
}

// ---------------------------------------------------------------------------
// NgramLm

NgramLm::NgramLm(Vocabulary vocab, size_t order, double delta)
    : vocab_(std::move(vocab)), order_(order), delta_(delta) {
  if (order_ == 0) throw ArgumentError("ngram: order must be >= 1");
  if (delta_ < 0) throw ArgumentError("ngram: smoothing constant must be >= 0");
}

void NgramLm::AddCount(const std::vector<int> &context, int next,
                       double count) {
  if (context.size() != order_ - 1) {
    throw ArgumentError("ngram: context length " +
                        std::to_string(context.size()) + " for order " +
                        std::to_string(order_));
  }
  if (next < 0 || next > eos()) {
    throw ArgumentError("ngram: symbol " + std::to_string(next) + " out of range");
  }
  auto &row = counts_[context];
  if (row.empty()) row.assign(vocab_size() + 1, 0.0);
  row[next] += count;
}

void NgramLm::AddSentence(std::span<const int> labels) {
  const int start = static_cast<int>(vocab_size());
  std::vector<int> context(order_ - 1, start);
  auto advance = [&](int symbol) {
    if (context.empty()) return;
    context.erase(context.begin());
    context.push_back(symbol);
  };
  for (int a : labels) {
    CheckLabel(a);
    AddCount(context, a, 1.0);
    advance(a);
  }
  AddCount(context, eos(), 1.0);
}

Array NgramLm::Distribution(const std::vector<int> &context) const {
  const size_t n = vocab_size() + 1;
  Array out(1, n);
  auto it = counts_.find(context);
  double total = 0.0;
  if (it != counts_.end()) {
    for (double c : it->second) total += c;
  }
  const double denom = total + delta_ * static_cast<double>(n);
  if (denom <= 0.0) {
    out.Fill(-std::log(static_cast<double>(n)));
    return out;
  }
  for (size_t k = 0; k < n; ++k) {
    const double c = it != counts_.end() ? it->second[k] : 0.0;
    out[k] = std::log((c + delta_) / denom);
  }
  return out;
}

LmState NgramLm::Start() const {
  LmState s;
  s.context.assign(order_ - 1, static_cast<int>(vocab_size()));
  s.log_probs = Distribution(s.context);
  return s;
}

LmState NgramLm::Step(const LmState &state, int label) const {
  CheckLabel(label);
  LmState next;
  next.context = state.context;
  if (!next.context.empty()) {
    next.context.erase(next.context.begin());
    next.context.push_back(label);
  }
  next.log_probs = Distribution(next.context);
  return next;
}

// ---------------------------------------------------------------------------
// MiniIlmNet

MiniIlmNet::MiniIlmNet(const MiniIlmConfig &config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)) {
  if (vocab_.size() != config_.vocab_size) {
    throw DimensionError("mini-ilm: vocabulary has " +
                         std::to_string(vocab_.size()) +
                         " labels but config says " +
                         std::to_string(config_.vocab_size));
  }
  embedding_ = Parameter("mini_ilm.embedding", config_.vocab_size + 1,
                         config_.embedding_dim);
  lstm_ = LstmLayer("mini_ilm.lstm", config_.embedding_dim, config_.hidden_units);
  out_ = Parameter("mini_ilm.out", config_.hidden_units, config_.output_dim);
  out_bias_ = Parameter("mini_ilm.out_bias", 1, config_.output_dim);
}

void MiniIlmNet::Initialize(uint64_t seed) {
  seed_ = seed;
  InitializeUniform(Params(), seed);
}

std::vector<Parameter *> MiniIlmNet::Params() {
  std::vector<Parameter *> out{&embedding_};
  for (Parameter *p : lstm_.Params()) out.push_back(p);
  out.push_back(&out_);
  out.push_back(&out_bias_);
  return out;
}

std::vector<const Parameter *> MiniIlmNet::Params() const {
  return AsConst<Parameter>(const_cast<MiniIlmNet *>(this)->Params());
}

MiniIlmNet::State MiniIlmNet::Feed(const State &state, int symbol) const {
  State next;
  next.lstm = lstm_.Step(EmbeddingRow(embedding_, symbol), state.lstm);
  next.output = kernels::AddRow(kernels::MatMul(next.lstm.h, out_.value),
                                out_bias_.value);
  return next;
}

MiniIlmNet::State MiniIlmNet::Start() const {
  State zero;
  zero.lstm = lstm_.ZeroState();
  return Feed(zero, static_cast<int>(config_.vocab_size));
}

MiniIlmNet::State MiniIlmNet::Step(const State &state, int label) const {
  if (label < 0 || static_cast<size_t>(label) >= config_.vocab_size) {
    throw ArgumentError("mini-ilm: label " + std::to_string(label) +
                        " out of range");
  }
  return Feed(state, label);
}

Var MiniIlmNet::Outputs(Tape &tape, std::span<const int> labels) {
  if (labels.empty()) throw ArgumentError("mini-ilm: empty label sequence");
  std::vector<int> ids{static_cast<int>(config_.vocab_size)};
  for (size_t s = 0; s + 1 < labels.size(); ++s) {
    if (labels[s] < 0 || static_cast<size_t>(labels[s]) >= config_.vocab_size) {
      throw ArgumentError("mini-ilm: label " + std::to_string(labels[s]) +
                          " out of range");
    }
    ids.push_back(labels[s]);
  }
  Var x = EmbedLookup(tape.Param(embedding_), ids);
  x = lstm_.Sequence(tape, x);
  return AddRow(MatMul(x, tape.Param(out_)), tape.Param(out_bias_));
}

}  // namespace rnnt
