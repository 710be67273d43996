// tests/model_test.cc

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rnnt/error.h"
#include "rnnt/model.h"
#include "rnnt/model_io.h"
#include "test_util.h"

namespace rnnt {
namespace {

namespace fs = std::filesystem;
using testing::RandomArray;
using testing::TinyRnnt;
using testing::TinyRnntConfig;

double Sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Array Softmax(const Array &logits) {
  Array p = kernels::LogSoftmaxRows(logits);
  for (size_t i = 0; i < p.size(); ++i) p[i] = std::exp(p[i]);
  return p;
}

std::string TempPath(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / "rnnt_ilm_model_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

TEST_CASE("encoder output length follows the ceil subsampling rule") {
  std::mt19937_64 rng(1);
  RnntConfig c = TinyRnntConfig();
  RnntModel m1 = TinyRnnt(1, c);
  CHECK(m1.Encode(RandomArray(5, 2, rng)).rows() == 5);
  c.subsampling = 2;
  RnntModel m2 = TinyRnnt(1, c);
  CHECK(m2.EncodedLength(5) == 3);
  CHECK(m2.Encode(RandomArray(5, 2, rng)).rows() == 3);
  c.subsampling = 3;
  CHECK(TinyRnnt(1, c).Encode(RandomArray(7, 2, rng)).rows() == 3);
}

TEST_CASE("zero-parameter encoder outputs zeros") {
  RnntModel m = TinyRnnt(3);
  m.SetZero();
  std::mt19937_64 rng(2);
  const Array h = m.Encode(RandomArray(4, 2, rng));
  CHECK(h == Array(4, m.encoder_dim()));
}

TEST_CASE("empty feature sequences and wrong feature widths are rejected") {
  RnntModel m = TinyRnnt(3);
  CHECK_THROWS_AS(m.Encode(Array(0, 2)), ArgumentError);
  CHECK_THROWS_AS(m.Encode(Array(3, 5)), ShapeError);
}

TEST_CASE("encoder value and tape paths agree") {
  RnntConfig c = TinyRnntConfig();
  c.encoder_layers = 2;
  c.subsampling = 2;
  RnntModel m = TinyRnnt(4, c);
  std::mt19937_64 rng(3);
  const Array x = RandomArray(7, 2, rng);
  Tape tape;
  CHECK(m.Encode(tape, x).value() == m.Encode(x));
}

TEST_CASE("prediction output is a pure function of the consumed history") {
  RnntModel m = TinyRnnt(5);
  const std::vector<int> hist = {2, 0, 1};
  const PredictionState a = m.PredictHistory(hist);
  const PredictionState b = m.PredictHistory(hist);
  CHECK(a.output == b.output);
  PredictionState s = m.PredictStep(m.PredictInitial(), m.start_symbol());
  for (int l : hist) s = m.PredictStep(s, l);
  CHECK(s.output == a.output);
  CHECK(s.consumed == 4);  // start symbol included
  Tape tape;
  const Array rows = m.PredictionOutputs(tape, hist).value();
  CHECK(kernels::TakeRow(rows, 3) == a.output);
  CHECK(kernels::TakeRow(rows, 0) == m.PredictHistory({}).output);
}

TEST_CASE("prediction network at hidden size 1 matches a scalar oracle") {
  RnntConfig c = TinyRnntConfig(2, 1);
  c.prediction_units = 1;
  c.embedding_dim = 1;
  RnntModel m = TinyRnnt(6, c, 0.9);
  const auto pp = m.PredictionParams();  // embedding, w_in, w_rec, bias
  const Array &emb = pp[0]->value, &w = pp[1]->value, &u = pp[2]->value, &b = pp[3]->value;
  double h = 0.0, cell = 0.0;
  auto step = [&](int symbol) {
    const double x = emb(symbol, 0);
    const double i = Sigm(w[0] * x + u[0] * h + b[0]);
    const double f = Sigm(w[1] * x + u[1] * h + b[1]);
    const double g = std::tanh(w[2] * x + u[2] * h + b[2]);
    const double o = Sigm(w[3] * x + u[3] * h + b[3]);
    cell = f * cell + i * g;
    h = o * std::tanh(cell);
  };
  PredictionState s = m.PredictStep(m.PredictInitial(), m.start_symbol());
  step(m.start_symbol());
  CHECK(testing::RelativeError(s.output[0], h, 1e-300) < 1e-12);
  for (int l : {1, 0, 1}) {
    s = m.PredictStep(s, l);
    step(l);
    CHECK(testing::RelativeError(s.output[0], h, 1e-300) < 1e-12);
  }
}

TEST_CASE("labels outside the vocabulary are rejected") {
  RnntModel m = TinyRnnt(5);
  CHECK_THROWS_AS(m.PredictStep(m.PredictInitial(), 4), ArgumentError);
  CHECK_THROWS_AS(m.PredictHistory(std::vector<int>{m.start_symbol()}), ArgumentError);
  CHECK_THROWS_AS(m.PredictStep(m.PredictInitial(), -1), ArgumentError);
}

TEST_CASE("zero joint gives uniform node distributions") {
  RnntModel m = TinyRnnt(7);
  for (Parameter *p : m.JointParams()) p->value.Fill(0.0);
  std::mt19937_64 rng(1);
  const Array logits = m.JointLogits(RandomArray(1, 3, rng), RandomArray(1, 3, rng));
  CHECK(logits == Array(1, 4));
  const Array probs = Softmax(logits);
  for (double p : probs.values()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("identity joint is additive in its two inputs") {
  RnntConfig c = TinyRnntConfig();
  c.joint_tanh = false;
  RnntModel m = TinyRnnt(8, c);
  std::mt19937_64 rng(9);
  const Array zg(1, 3), zh(1, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Array g = RandomArray(1, 3, rng), h = RandomArray(1, 3, rng);
    const Array lhs = m.JointLogits(g, h);
    const Array a = m.JointLogits(g, zh), b = m.JointLogits(zg, h), z = m.JointLogits(zg, zh);
    for (size_t k = 0; k < lhs.size(); ++k) CHECK(lhs[k] == doctest::Approx(a[k] + b[k] - z[k]).epsilon(1e-12));
  }
}

TEST_CASE("joint logits have |V|+1 entries and the no-blank variant drops the last") {
  RnntModel m = TinyRnnt(10);
  std::mt19937_64 rng(10);
  const Array g = RandomArray(1, 3, rng), h = RandomArray(1, 3, rng);
  const Array full = m.JointLogits(g, h);
  const Array no_blank = m.JointLogitsNoBlank(g, h);
  REQUIRE(full.cols() == m.vocab_size() + 1);
  REQUIRE(no_blank.cols() == m.vocab_size());
  for (size_t k = 0; k < no_blank.size(); ++k) CHECK(no_blank[k] == full[k]);
  double total = 0.0;
  const Array probs = Softmax(full);
  for (double p : probs.values()) total += p;
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK_THROWS_AS(m.JointLogits(RandomArray(1, 2, rng), h), ShapeError);
}

TEST_CASE("blank-free softmax equals the renormalized label part") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    RnntModel m = TinyRnnt(100 + trial, TinyRnntConfig(4), 1.5);
    const Array g = RandomArray(1, 3, rng, -3, 3), h = RandomArray(1, 3, rng, -3, 3);
    const Array p = Softmax(m.JointLogits(g, h));
    const Array q = Softmax(m.JointLogitsNoBlank(g, h));
    const double blank = p[m.blank()];
    for (size_t a = 0; a < q.size(); ++a) CHECK(std::abs(q[a] - p[a] / (1.0 - blank)) < 1e-12);
  }
}

TEST_CASE("joint grid rows pair every frame with every history") {
  RnntModel m = TinyRnnt(13);
  std::mt19937_64 rng(13);
  const Array enc = m.Encode(RandomArray(3, 2, rng));
  Tape tape;
  const std::vector<int> labels = {1, 2};
  const Array pred = m.PredictionOutputs(tape, labels).value();
  const Array grid = m.JointGrid(enc, pred);
  for (size_t t = 0; t < 3; ++t) {
    for (size_t s = 0; s < 3; ++s) {
      const Array direct = m.JointLogits(kernels::TakeRow(pred, s), kernels::TakeRow(enc, t));
      CHECK(kernels::TakeRow(grid, t * 3 + s) == direct);
    }
  }
}

TEST_CASE("n-gram with delta 1 and no counts is uniform over labels and sentence end") {
  NgramLm lm(Vocabulary::Synthetic(2), 2, 1.0);
  const LmState s = lm.Start();
  for (size_t i = 0; i < 3; ++i) CHECK(std::exp(s.log_probs[i]) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("n-gram with delta 0 uses count ratios") {
  NgramLm lm(Vocabulary::Synthetic(2), 2, 0.0);
  const int a = 0, b = 1;
  lm.AddCount({a}, b, 2);
  lm.AddCount({a}, a, 1);
  lm.AddCount({a}, lm.eos(), 1);
  const LmState s = lm.Step(lm.Start(), a);
  CHECK(std::exp(s.log_probs[b]) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::exp(s.log_probs[a]) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("n-gram sentences contribute start and end counts") {
  NgramLm lm(Vocabulary::Synthetic(3), 2, 0.0);
  lm.AddSentence(std::vector<int>{0, 2});
  lm.AddSentence(std::vector<int>{0, 1});
  const double lp = lm.SequenceLogProb(std::vector<int>{0, 2});
  // P(0|<s>) = 1, P(2|0) = 1/2, P(</s>|2) = 1.
  CHECK(lp == doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("recurrent LM sequence log-prob is the sum of its steps") {
  RecurrentLmConfig c;
  c.vocab_size = 4;
  c.embedding_dim = 3;
  c.hidden_units = 5;
  RecurrentLm lm(c, Vocabulary::Synthetic(4));
  lm.Initialize(3);
  InitializeUniform(lm.Params(), 3, 0.6);
  const std::vector<int> seq = {3, 1, 1, 0};
  double total = 0.0;
  LmState s = lm.Start();
  for (int l : seq) {
    double mass = 0.0;
    for (double v : s.log_probs.values()) mass += std::exp(v);
    CHECK(std::abs(mass - 1.0) < 1e-12);
    total += s.log_probs[l];
    s = lm.Step(s, l);
  }
  total += s.log_probs[lm.eos()];
  CHECK(lm.SequenceLogProb(seq) == doctest::Approx(total).epsilon(1e-14));
  Tape tape;
  CHECK(lm.SequenceNll(tape, seq).value()[0] == doctest::Approx(-total).epsilon(1e-12));
}

TEST_CASE("model files round-trip bit-exactly") {
  RnntConfig c = TinyRnntConfig();
  c.subsampling = 2;
  RnntModel m = TinyRnnt(14, c);
  m.set_seed(14);
  const std::string p = TempPath("rnnt.json");
  SaveModel(p, m);
  CHECK(PeekModelKind(p) == kRnntKind);
  const RnntModel back = LoadRnntModel(p);
  CHECK(back.config() == m.config());
  CHECK(back.vocab() == m.vocab());
  CHECK(back.seed() == 14);
  const auto a = m.Params();
  const auto b = back.Params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  RecurrentLmConfig lc;
  lc.vocab_size = 3;
  RecurrentLm dr(lc, Vocabulary::Synthetic(3), RecurrentLm::kDensityRatioKind);
  dr.Initialize(5);
  SaveModel(TempPath("dr.json"), dr);
  const RecurrentLm dr_back = LoadDensityRatioLm(TempPath("dr.json"));
  CHECK(dr_back.kind() == RecurrentLm::kDensityRatioKind);
  for (size_t i = 0; i < dr.Params().size(); ++i) CHECK(dr.Params()[i]->value == dr_back.Params()[i]->value);

  MiniIlmNet mini = testing::TinyMini(m, 6);
  SaveModel(TempPath("mini.json"), mini);
  const MiniIlmNet mini_back = LoadMiniIlm(TempPath("mini.json"));
  CHECK(mini_back.config() == mini.config());
  for (size_t i = 0; i < mini.Params().size(); ++i) CHECK(mini.Params()[i]->value == mini_back.Params()[i]->value);

  NgramLm ng(Vocabulary::Synthetic(3), 3, 0.25);
  ng.AddSentence(std::vector<int>{0, 1, 2, 1});
  SaveModel(TempPath("ng.json"), ng);
  const auto ng_back = LoadLanguageModel(TempPath("ng.json"));
  CHECK(ng_back->kind() == NgramLm::kKind);
  const std::vector<int> probe = {1, 2, 1, 0};
  CHECK(ng_back->SequenceLogProb(probe) == ng.SequenceLogProb(probe));
}

nlohmann::json ReadJson(const std::string &path) {
  std::ifstream is(path);
  return nlohmann::json::parse(is);
}

void WriteFile(const std::string &path, const std::string &text) {
  std::ofstream os(path);
  os << text;
}

TEST_CASE("model loaders raise distinct errors") {
  RnntModel m = TinyRnnt(15);
  const std::string good = TempPath("good.json");
  SaveModel(good, m);
  const nlohmann::json j = ReadJson(good);

  SUBCASE("wrong magic") {
    nlohmann::json bad = j;
    bad["format"] = "something-else";
    WriteFile(TempPath("magic.json"), bad.dump());
    CHECK_THROWS_AS(LoadRnntModel(TempPath("magic.json")), FormatError);
  }
  SUBCASE("unknown version") {
    nlohmann::json bad = j;
    bad["format_version"] = 99;
    WriteFile(TempPath("version.json"), bad.dump());
    CHECK_THROWS_AS(LoadRnntModel(TempPath("version.json")), VersionError);
  }
  SUBCASE("truncated") {
    const std::string text = j.dump();
    WriteFile(TempPath("trunc.json"), text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(LoadRnntModel(TempPath("trunc.json")), FormatError);
  }
  SUBCASE("vocabulary size mismatch") {
    CHECK_THROWS_AS(LoadRnntModel(good, 5), DimensionError);
    CHECK_NOTHROW(LoadRnntModel(good, 3));
  }
  SUBCASE("wrong kind") {
    CHECK_THROWS_AS(LoadMiniIlm(good), FormatError);
    CHECK_THROWS_AS(LoadLanguageModel(good), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(LoadRnntModel(TempPath("absent.json")), IoError);
  }
}

}  // namespace
}  // namespace rnnt
