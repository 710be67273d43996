// tests/decoder_test.cc

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rnnt/decoder.h"
#include "rnnt/error.h"
#include "rnnt/training.h"
#include "test_util.h"

namespace rnnt {
namespace {

using testing::RandomArray;
using testing::RelativeError;
using testing::TinyMini;
using testing::TinyRnnt;

std::vector<double> Logs(std::vector<double> p) {
  for (double &v : p) v = std::log(v);
  return p;
}

TEST_CASE("shallow fusion adds the scaled LM and length reward to labels only") {
  const auto node = Logs({0.5, 0.3, 0.2});
  const auto lm = Logs({0.6, 0.3, 0.1});
  FusionConfig c;
  c.lm_scale = 0.5;
  c.length_reward = 0.25;
  const auto out = StepScores(node, lm, {}, c);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == doctest::Approx(std::log(0.5) + 0.5 * std::log(0.6) + 0.25));
  CHECK(out[1] == doctest::Approx(std::log(0.3) + 0.5 * std::log(0.3) + 0.25));
  CHECK(out[2] == node[2]);
}

TEST_CASE("ILM correction subtracts the scaled ILM") {
  const auto node = Logs({0.5, 0.3, 0.2});
  const auto lm = Logs({0.6, 0.3, 0.1});
  const auto ilm = Logs({0.8, 0.2});
  FusionConfig c;
  c.lm_scale = 0.5;
  c.ilm_scale = 0.3;
  c.ilm = IlmKind::kZero;
  const auto out = StepScores(node, lm, ilm, c);
  CHECK(out[0] == doctest::Approx(std::log(0.5) + 0.5 * std::log(0.6) - 0.3 * std::log(0.8)));
  CHECK(out[1] == doctest::Approx(std::log(0.3) + 0.5 * std::log(0.3) - 0.3 * std::log(0.2)));
  CHECK(out[2] == node[2]);
}

TEST_CASE("renorm-eps rescales the corrected labels into the label mass") {
  const auto node = Logs({0.5, 0.3, 0.2});
  const auto ilm = Logs({0.8, 0.2});
  FusionConfig c;
  c.ilm_scale = 1.0;
  c.ilm = IlmKind::kZero;
  c.renorm_eps = true;
  const auto out = StepScores(node, {}, ilm, c);
  // Corrected (0.5/0.8, 0.3/0.2) = (0.625, 1.5), rescaled to total 0.8.
  CHECK(std::exp(out[0]) == doctest::Approx(0.8 * 0.625 / 2.125).epsilon(1e-12));
  CHECK(std::exp(out[1]) == doctest::Approx(0.8 * 1.5 / 2.125).epsilon(1e-12));
  CHECK(out[2] == node[2]);
}

TEST_CASE("renorm-eps keeps the blank/label split for random inputs") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto node = testing::RandomLogDistribution(5, rng);
    const auto ilm = testing::RandomLogDistribution(4, rng);
    FusionConfig c;
    c.ilm_scale = UniformDouble(rng, 0.0, 2.0);
    c.ilm = IlmKind::kMiniLstm;
    c.renorm_eps = true;
    const auto out = StepScores(node, {}, ilm, c);
    double labels = 0.0;
    for (size_t a = 0; a < 4; ++a) labels += std::exp(out[a]);
    CHECK(labels + std::exp(out[4]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[4] == node[4]);
  }
}

TEST_CASE("with lambda2 = 0 every ILM mode scores exactly like shallow fusion") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto node = testing::RandomLogDistribution(4, rng);
    const auto lm = testing::RandomLogDistribution(4, rng);
    const auto ilm = testing::RandomLogDistribution(3, rng);
    FusionConfig sf;
    sf.lm_scale = UniformDouble(rng, 0.0, 2.0);
    sf.length_reward = UniformDouble(rng, -1.0, 1.0);
    const auto ref = StepScores(node, lm, {}, sf);
    for (bool renorm : {false, true}) {
      FusionConfig c = sf;
      c.ilm = IlmKind::kAvg;
      c.renorm_eps = renorm;
      CHECK(StepScores(node, lm, ilm, c) == ref);
    }
  }
}

TEST_CASE("step scores validate distribution sizes and configs") {
  const auto node = Logs({0.5, 0.3, 0.2});
  FusionConfig c;
  c.lm_scale = 1.0;
  CHECK_THROWS_AS(StepScores(node, Logs({0.5, 0.5}), {}, c), ShapeError);
  c.ilm = IlmKind::kZero;
  CHECK_THROWS_AS(StepScores(node, Logs({0.6, 0.3, 0.1}), Logs({1.0}), c), ShapeError);
  FusionConfig bad;
  bad.renorm_eps = true;
  CHECK_THROWS_AS(bad.Validate(), ArgumentError);
  bad = FusionConfig{};
  bad.lm_scale = -1;
  CHECK_THROWS_AS(bad.Validate(), ArgumentError);
  CHECK(FinalScore(Logs({0.5, 0.3, 0.2}), FusionConfig{}) == 0.0);
  c.lm_scale = 2.0;
  CHECK(FinalScore(Logs({0.5, 0.3, 0.2}), c) == doctest::Approx(2 * std::log(0.2)));
  CHECK(ParseRecombination("max") == Recombination::kMax);
  CHECK_THROWS_AS(ParseRecombination("avg"), ArgumentError);
}

// Everything a decode over a tiny vocabulary needs, for each scoring mode.
struct Fixture {
  RnntModel model;
  MiniIlmNet mini;
  RecurrentLm dr;
  NgramLm lm;

  explicit Fixture(uint64_t seed) : model(TinyRnnt(seed, testing::TinyRnntConfig(2), 1.0)) {
    mini = TinyMini(model, seed + 1, 1.0);
    RecurrentLmConfig lc;
    lc.vocab_size = 2;
    lc.embedding_dim = 2;
    lc.hidden_units = 2;
    dr = RecurrentLm(lc, model.vocab(), RecurrentLm::kDensityRatioKind);
    dr.Initialize(seed + 2);
    InitializeUniform(dr.Params(), seed + 2, 1.0);
    lm = TrainNgramLm(model.vocab(), {{0, 1}, {1, 1, 0}, {0}, {1, 0, 1}}, 2, 0.5);
  }

  DecodeResources Resources(IlmKind kind, bool with_lm) const {
    DecodeResources r{&model, with_lm ? &lm : nullptr, {kind}};
    if (kind == IlmKind::kMiniLstm) r.ilm.mini = &mini;
    if (kind == IlmKind::kDensityRatio) r.ilm.density_ratio = &dr;
    return r;
  }
};

struct Mode {
  const char *name;
  IlmKind ilm;
  bool with_lm;
  bool renorm;
};

constexpr Mode kModes[] = {
    {"no-lm", IlmKind::kNone, false, false},
    {"sf", IlmKind::kNone, true, false},
    {"ilm-zero", IlmKind::kZero, true, false},
    {"ilm-avg", IlmKind::kAvg, true, false},
    {"ilm-mini", IlmKind::kMiniLstm, true, false},
    {"ilm-dr", IlmKind::kDensityRatio, true, false},
    {"renorm-mini", IlmKind::kMiniLstm, true, true},
};

TEST_CASE("a saturated beam finds the exhaustive optimum") {
  std::mt19937_64 rng(3);
  for (int instance = 0; instance < 12; ++instance) {
    const Fixture f(100 + instance);
    const Array features = RandomArray(1 + instance % 3, 2, rng);
    for (const Mode &m : kModes) {
      for (Recombination r : {Recombination::kLogSumExp, Recombination::kMax}) {
        for (Topology topo : {Topology::kStandard, Topology::kMonotonic}) {
          CAPTURE(m.name);
          CAPTURE(RecombinationName(r));
          CAPTURE(TopologyName(topo));
          FusionConfig c;
          c.ilm = m.ilm;
          c.renorm_eps = m.renorm;
          c.lm_scale = m.with_lm ? 0.7 : 0.0;
          c.ilm_scale = m.ilm == IlmKind::kNone ? 0.0 : 0.4;
          c.length_reward = 0.3;
          c.recombination = r;
          c.beam = 100000;
          c.score_beam = 1e9;
          c.max_labels_per_frame = 2;
          const DecodeResources res = f.Resources(m.ilm, m.with_lm);
          const Hypothesis exact = ExhaustiveDecode(res, features, c, topo);
          const DecodeResult beam = BeamSearchDecode(res, features, c, topo);
          CHECK(beam.best().labels == exact.labels);
          CHECK(RelativeError(beam.best().score, exact.score, 1e-12) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("a dominant blank decodes to the empty sequence") {
  RnntModel model = TinyRnnt(5);
  model.SetZero();
  auto params = model.Params();
  Parameter *out_bias = params.back();
  REQUIRE(out_bias->value.cols() == model.vocab_size() + 1);
  out_bias->value[model.blank()] = 10.0;
  std::mt19937_64 rng(4);
  const DecodeResult r =
      BeamSearchDecode({&model, nullptr, {}}, RandomArray(4, 2, rng), FusionConfig{}, Topology::kStandard);
  CHECK(r.best().labels.empty());
  const size_t T = model.EncodedLength(4);
  CHECK(r.best().alignment == std::vector<int>(T, model.blank()));
}

TEST_CASE("a label-biased monotonic model emits the label on every frame") {
  RnntModel model = TinyRnnt(6);
  model.SetZero();
  Parameter *out_bias = model.Params().back();
  out_bias->value[1] = 8.0;
  std::mt19937_64 rng(5);
  FusionConfig c;
  c.beam = 4;
  const size_t T = model.EncodedLength(3);
  const auto r = BeamSearchDecode({&model, nullptr, {}}, RandomArray(3, 2, rng), c,
                                  Topology::kMonotonic);
  CHECK(r.best().labels == std::vector<int>(T, 1));
}

TEST_CASE("decoding with lambda2 = 0 reproduces shallow fusion bit for bit") {
  std::mt19937_64 rng(6);
  for (int instance = 0; instance < 5; ++instance) {
    const Fixture f(200 + instance);
    const Array features = RandomArray(5, 2, rng);
    FusionConfig sf;
    sf.lm_scale = 0.6;
    sf.length_reward = 0.2;
    sf.beam = 4;
    const DecodeResult ref = BeamSearchDecode(f.Resources(IlmKind::kNone, true), features, sf,
                                              Topology::kStandard);
    for (IlmKind kind : {IlmKind::kZero, IlmKind::kMiniLstm, IlmKind::kDensityRatio}) {
      for (bool renorm : {false, true}) {
        FusionConfig c = sf;
        c.ilm = kind;
        c.renorm_eps = renorm;
        const DecodeResult got =
            BeamSearchDecode(f.Resources(kind, true), features, c, Topology::kStandard);
        REQUIRE(got.nbest.size() == ref.nbest.size());
        for (size_t i = 0; i < ref.nbest.size(); ++i) {
          CHECK(got.nbest[i].labels == ref.nbest[i].labels);
          CHECK(got.nbest[i].score == ref.nbest[i].score);
          CHECK(got.nbest[i].alignment == ref.nbest[i].alignment);
        }
      }
    }
  }
}

// Replays an alignment string and sums the step scores along it.
double ReplayScore(const Fixture &f, const DecodeResources &res, const Array &features,
                   const std::vector<int> &alignment, const FusionConfig &c, Topology topo) {
  const RnntModel &m = f.model;
  const Array enc = m.Encode(features);
  PredictionState pred = m.PredictStep(m.PredictInitial(), m.start_symbol());
  LmState lm = res.lm->Start();
  IlmState ilm = IlmInit(res.ilm, m, &enc);
  size_t t = 0;
  double total = 0.0;
  for (int sym : alignment) {
    const Array node = kernels::LogSoftmaxRows(m.JointLogits(pred.output, kernels::TakeRow(enc, t)));
    const auto scores = StepScores(node.data(), lm.log_probs.data(), ilm.log_probs.data(), c);
    total += scores[sym];
    if (sym == m.blank()) {
      ++t;
      continue;
    }
    pred = m.PredictStep(pred, sym);
    lm = res.lm->Step(lm, sym);
    ilm = IlmAdvance(res.ilm, m, ilm, sym);
    if (topo == Topology::kMonotonic) ++t;
  }
  CHECK(t == enc.rows());
  return total + FinalScore(lm.log_probs.data(), c);
}

TEST_CASE("max-recombined scores equal the replayed best alignment") {
  std::mt19937_64 rng(7);
  for (int instance = 0; instance < 6; ++instance) {
    const Fixture f(300 + instance);
    const Array features = RandomArray(6, 2, rng);
    FusionConfig c;
    c.lm_scale = 0.5;
    c.ilm_scale = 0.3;
    c.length_reward = 0.1;
    c.ilm = IlmKind::kMiniLstm;
    c.recombination = Recombination::kMax;
    c.beam = 6;
    const DecodeResources res = f.Resources(IlmKind::kMiniLstm, true);
    for (Topology topo : {Topology::kStandard, Topology::kMonotonic}) {
      const DecodeResult r = BeamSearchDecode(res, features, c, topo);
      for (const Hypothesis &h : r.nbest) {
        std::vector<int> emitted;
        for (int s : h.alignment) {
          if (s != f.model.blank()) emitted.push_back(s);
        }
        CHECK(emitted == h.labels);
        CHECK(RelativeError(ReplayScore(f, res, features, h.alignment, c, topo), h.score, 1e-12) <
              1e-12);
      }
      for (size_t i = 1; i < r.nbest.size(); ++i) CHECK(r.nbest[i - 1].score >= r.nbest[i].score);
    }
  }
}

TEST_CASE("the scorer must match the config's ILM variant") {
  const Fixture f(7);
  std::mt19937_64 rng(8);
  FusionConfig c;
  c.ilm = IlmKind::kZero;
  CHECK_THROWS_AS(BeamSearchDecode(f.Resources(IlmKind::kNone, true), RandomArray(3, 2, rng), c,
                                   Topology::kStandard),
                  ArgumentError);
  NgramLm wide(Vocabulary::Synthetic(5), 2, 1.0);
  CHECK_THROWS_AS(BeamSearchDecode({&f.model, &wide, {}}, RandomArray(3, 2, rng), FusionConfig{},
                                   Topology::kStandard),
                  DimensionError);
}

TEST_CASE("the exhaustive decoder refuses oversized enumerations") {
  const Fixture f(9);
  std::mt19937_64 rng(9);
  CHECK_THROWS_AS(ExhaustiveDecode(f.Resources(IlmKind::kNone, false), RandomArray(8, 2, rng),
                                   FusionConfig{}, Topology::kStandard, 1000),
                  ArgumentError);
}

TEST_CASE("n-best lists round-trip through text") {
  const Fixture f(10);
  std::mt19937_64 rng(10);
  FusionConfig c;
  c.beam = 4;
  const DecodeResult r =
      BeamSearchDecode(f.Resources(IlmKind::kNone, true), RandomArray(5, 2, rng), c,
                       Topology::kStandard);
  std::stringstream ss;
  WriteNbest(ss, "utt-1", r, f.model.vocab());
  const auto back = ReadNbest(ss, f.model.vocab());
  REQUIRE(back.size() == r.nbest.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == "utt-1");
    CHECK(back[i].rank == i + 1);
    CHECK(back[i].score == r.nbest[i].score);
    CHECK(back[i].labels == r.nbest[i].labels);
  }
}

TEST_CASE("malformed n-best lines carry their line number") {
  const Vocabulary vocab = Vocabulary::Synthetic(2);
  const std::string strings = vocab.Render({0, 1});
  std::stringstream ss("u\t1\t-1.5\t0 1\t" + strings + "\nu\t2\tnope\t0\t" + vocab.Render({0}) +
                       "\n");
  try {
    ReadNbest(ss, vocab, "x.nbest");
    FAIL("expected ParseError");
  } catch (const ParseError &e) {
    CHECK(e.line() == 2);
  }
  std::stringstream mismatch("u\t1\t0\t0\t" + strings + "\n");
  CHECK_THROWS_AS(ReadNbest(mismatch, vocab), ParseError);
  std::stringstream short_line("u\t1\t0\n");
  CHECK_THROWS_AS(ReadNbest(short_line, vocab), ParseError);
}

}  // namespace
}  // namespace rnnt
