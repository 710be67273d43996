// tests/losses_test.cc
//
// Gradient checks compare against central differences on every trainable
// entry. Frozen networks are left out of the numeric check (their loss
// derivative is nonzero but the tape deliberately reports none) and are
// instead checked for untouched gradients.

#include <cmath>
#include <random>

#include "doctest.h"
#include "rnnt/error.h"
#include "rnnt/losses.h"
#include "rnnt/training.h"
#include "test_util.h"

namespace rnnt {
namespace {

using testing::CheckGradients;
using testing::RandomUtterance;
using testing::TinyMini;
using testing::TinyRnnt;

std::vector<Utterance> SmallBatch(uint64_t seed, size_t frames = 4) {
  std::mt19937_64 rng(seed);
  return {RandomUtterance(frames, {1, 0}, 2, rng, "a"), RandomUtterance(frames, {2}, 2, rng, "b"),
          RandomUtterance(frames, {0, 2, 1}, 2, rng, "c")};
}

std::vector<Parameter *> Concat(std::vector<Parameter *> a, const std::vector<Parameter *> &b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

bool AllZero(const std::vector<Parameter *> &params) {
  for (const Parameter *p : params) {
    for (double g : p->grad.values()) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

void ExpectGradientsMatch(const std::function<Var(Tape &)> &loss,
                          const std::vector<Parameter *> &params) {
  const auto report = CheckGradients(loss, params);
  INFO(report.worst);
  CHECK(report.checked > 0);
  CHECK(report.max_abs_gradient > 0.0);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("transducer loss gradients match central differences") {
  for (Topology topo : {Topology::kStandard, Topology::kMonotonic}) {
    CAPTURE(TopologyName(topo));
    RnntModel model = TinyRnnt(1);
    const auto batch = SmallBatch(2);
    ExpectGradientsMatch([&](Tape &t) { return RnntLoss(t, model, batch, topo); },
                         model.Params());
  }
}

TEST_CASE("ILM loss gradients match central differences for every variant") {
  RnntModel model = TinyRnnt(3);
  MiniIlmNet mini = TinyMini(model, 4);
  RecurrentLmConfig lc;
  lc.vocab_size = 3;
  lc.embedding_dim = 2;
  lc.hidden_units = 2;
  RecurrentLm dr(lc, model.vocab(), RecurrentLm::kDensityRatioKind);
  dr.Initialize(5);
  InitializeUniform(dr.Params(), 5, 0.5);
  const auto batch = SmallBatch(6);

  SUBCASE("zero") {
    const IlmNetworks nets{IlmKind::kZero, &model};
    ExpectGradientsMatch([&](Tape &t) { return IlmLoss(t, nets, batch); },
                         Concat(model.PredictionParams(), model.JointParams()));
  }
  SUBCASE("avg") {
    const IlmNetworks nets{IlmKind::kAvg, &model};
    ExpectGradientsMatch([&](Tape &t) { return IlmLoss(t, nets, batch); }, model.Params());
  }
  SUBCASE("mini-lstm") {
    const IlmNetworks nets{IlmKind::kMiniLstm, &model, &mini};
    ExpectGradientsMatch([&](Tape &t) { return IlmLoss(t, nets, batch); },
                         Concat(mini.Params(), model.JointParams()));
  }
  SUBCASE("density-ratio") {
    const IlmNetworks nets{IlmKind::kDensityRatio, nullptr, nullptr, &dr};
    ExpectGradientsMatch([&](Tape &t) { return IlmLoss(t, nets, batch); }, dr.Params());
  }
}

TEST_CASE("ILMT loss gradients match central differences with the encoder frozen") {
  for (IlmKind kind : {IlmKind::kZero, IlmKind::kAvg, IlmKind::kMiniLstm}) {
    CAPTURE(IlmKindName(kind));
    RnntModel model = TinyRnnt(7);
    MiniIlmNet mini = TinyMini(model, 8);
    const auto batch = SmallBatch(9);
    const IlmNetworks nets{kind, &model, &mini};
    auto loss = [&](Tape &t) {
      return IlmtLoss(t, model, nets, batch, Topology::kStandard, 0.2);
    };
    auto trainable = Concat(model.PredictionParams(), model.JointParams());
    if (kind == IlmKind::kMiniLstm) trainable = Concat(trainable, mini.Params());
    ExpectGradientsMatch(loss, trainable);

    ZeroGrads(model.Params());
    Tape tape;
    tape.Backward(loss(tape));
    CHECK(AllZero(model.EncoderParams()));
  }
}

TEST_CASE("ILMT rejects bad arguments") {
  RnntModel model = TinyRnnt(10), other = TinyRnnt(11);
  const auto batch = SmallBatch(12);
  Tape tape;
  CHECK_THROWS_AS(IlmtLoss(tape, model, {IlmKind::kZero, &model}, batch, Topology::kStandard, -0.1),
                  ArgumentError);
  CHECK_THROWS_AS(IlmtLoss(tape, model, {IlmKind::kZero, &other}, batch, Topology::kStandard, 0.2),
                  ArgumentError);
  CHECK_THROWS_AS(
      IlmtLoss(tape, model, {IlmKind::kDensityRatio, &model}, batch, Topology::kStandard, 0.2),
      ArgumentError);
  CHECK_THROWS_AS(IlmLoss(tape, {IlmKind::kAvg, &model}, std::vector<Utterance>{{"e", {1}, {}}}),
                  ArgumentError);
}

TEST_CASE("ILMT with alpha 0 is the transducer loss, value and gradient") {
  RnntModel a = TinyRnnt(13), b = TinyRnnt(13);
  const auto batch = SmallBatch(14);
  ZeroGrads(a.Params());
  ZeroGrads(b.Params());
  Tape ta, tb;
  const Var la = IlmtLoss(ta, a, {IlmKind::kZero, &a}, batch, Topology::kStandard, 0.0);
  tb.Freeze(b.EncoderParams());
  const Var lb = RnntLoss(tb, b, batch, Topology::kStandard);
  CHECK(la.value() == lb.value());
  ta.Backward(la);
  tb.Backward(lb);
  const auto pa = a.Params(), pb = b.Params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->grad == pb[i]->grad);
}

TEST_CASE("losses are non-negative") {
  RnntModel model = TinyRnnt(15);
  MiniIlmNet mini = TinyMini(model, 16);
  const auto batch = SmallBatch(17);
  std::vector<AlignedExample> aligned;
  for (const auto &u : batch) aligned.push_back(MakeAlignedExample(model, u, Topology::kStandard));
  Tape t;
  CHECK(RnntLoss(t, model, batch, Topology::kMonotonic).value()[0] >= 0.0);
  CHECK(IlmLoss(t, {IlmKind::kAvg, &model}, batch).value()[0] >= 0.0);
  CHECK(JPrimeLoss(t, model, mini, aligned).value()[0] >= 0.0);
  CHECK(ExactIlmLoss(t, model, mini, aligned, 1.0).value()[0] >= 0.0);
}

TEST_CASE("infeasible monotonic utterances are reported") {
  RnntModel model = TinyRnnt(18);
  std::mt19937_64 rng(1);
  const Utterance u = RandomUtterance(2, {0, 1, 2}, 2, rng);
  Tape t;
  CHECK_THROWS_AS(RnntSequenceNll(t, model, u, Topology::kMonotonic), InfeasibleError);
  CHECK_NOTHROW(RnntSequenceNll(t, model, u, Topology::kStandard));
}

struct AlignedFixture {
  RnntModel model = TinyRnnt(19);
  MiniIlmNet mini = TinyMini(model, 20);
  std::vector<AlignedExample> batch;
  AlignedFixture() {
    for (const auto &u : SmallBatch(21, 5)) {
      batch.push_back(MakeAlignedExample(model, u, Topology::kStandard));
    }
  }
};

TEST_CASE("J' and exact ILM gradients match central differences") {
  AlignedFixture f;
  ExpectGradientsMatch([&](Tape &t) { return JPrimeLoss(t, f.model, f.mini, f.batch); },
                       f.mini.Params());
  ExpectGradientsMatch([&](Tape &t) { return ExactIlmLoss(t, f.model, f.mini, f.batch, 1.5); },
                       f.mini.Params());
  ZeroGrads(f.model.Params());
  Tape tape;
  tape.Backward(ExactIlmLoss(tape, f.model, f.mini, f.batch, 1.5));
  CHECK(AllZero(f.model.Params()));
}

TEST_CASE("alignments place one frame per label in order") {
  AlignedFixture f;
  for (const auto &ex : f.batch) {
    REQUIRE(ex.frames.size() == ex.labels.size());
    for (size_t s = 0; s < ex.frames.size(); ++s) {
      CHECK(ex.frames[s] < ex.encoded.rows());
      if (s > 0) CHECK(ex.frames[s] >= ex.frames[s - 1]);
    }
  }
}

// Mean over positions of H(softmax J\eps(g_{s-1}, h_t(s))), by hand.
double TargetEntropy(const RnntModel &model, const std::vector<AlignedExample> &batch) {
  double total = 0.0, positions = 0.0;
  for (const auto &ex : batch) {
    PredictionState pred = model.PredictStep(model.PredictInitial(), model.start_symbol());
    for (size_t s = 0; s < ex.labels.size(); ++s) {
      const Array logits = model.JointLogitsNoBlank(pred.output, kernels::TakeRow(ex.encoded, ex.frames[s]));
      const Array lp = kernels::LogSoftmaxRows(logits);
      for (double v : lp.values()) total -= std::exp(v) * v;
      positions += 1.0;
      pred = model.PredictStep(pred, ex.labels[s]);
    }
  }
  return total / positions;
}

TEST_CASE("J' is bounded below by the target entropy and meets it when h' matches") {
  AlignedFixture f;
  const double entropy = TargetEntropy(f.model, f.batch);
  {
    Tape t;
    CHECK(JPrimeLoss(t, f.model, f.mini, f.batch).value()[0] >= entropy);
  }
  // A constant encoder output lets a constant h' match every aligned frame.
  std::mt19937_64 rng(3);
  const Array h = testing::RandomArray(1, f.model.encoder_dim(), rng);
  for (auto &ex : f.batch) {
    for (size_t t = 0; t < ex.encoded.rows(); ++t) {
      std::copy(h.values().begin(), h.values().end(), ex.encoded.row(t).begin());
    }
  }
  f.mini.output_weight().value = Array(f.mini.output_weight().value.rows(), h.cols());
  f.mini.output_bias().value = h;
  Tape t;
  CHECK(JPrimeLoss(t, f.model, f.mini, f.batch).value()[0] ==
        doctest::Approx(TargetEntropy(f.model, f.batch)).epsilon(1e-12));
}

TEST_CASE("J' needs an alignment for every label") {
  AlignedFixture f;
  f.batch[1].frames.pop_back();
  Tape t;
  CHECK_THROWS_AS(JPrimeLoss(t, f.model, f.mini, f.batch), ArgumentError);
  CHECK_THROWS_AS(ExactIlmLoss(t, f.model, f.mini, f.batch, -1.0), ArgumentError);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(TrainMiniIlm(f.model, f.mini, f.batch, {}, MiniIlmLoss::kExact, 1.0, tc),
                  ArgumentError);
}

TEST_CASE("exact ILM training with alpha 0 follows the plain trajectory bit for bit") {
  AlignedFixture f;
  MiniIlmNet plain = f.mini, exact = f.mini;
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  TrainMiniIlm(f.model, plain, f.batch, f.batch, MiniIlmLoss::kPlain, 0.0, tc);
  TrainMiniIlm(f.model, exact, f.batch, f.batch, MiniIlmLoss::kExact, 0.0, tc);
  const auto pp = plain.Params(), pe = exact.Params();
  for (size_t i = 0; i < pp.size(); ++i) CHECK(pp[i]->value == pe[i]->value);
}

TEST_CASE("ILMT fine-tuning keeps the encoder fixed") {
  RnntModel model = TinyRnnt(22);
  RnntModel before = model;
  const auto batch = SmallBatch(23);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  FineTuneIlmt(model, batch, Topology::kStandard, IlmKind::kAvg, 0.2, tc);
  const auto now = model.EncoderParams();
  const auto then = before.EncoderParams();
  for (size_t i = 0; i < now.size(); ++i) CHECK(now[i]->value == then[i]->value);
  bool moved = false;
  const auto jp = model.JointParams();
  const auto jb = before.JointParams();
  for (size_t i = 0; i < jp.size(); ++i) moved = moved || !(jp[i]->value == jb[i]->value);
  CHECK(moved);
}

TEST_CASE("transducer training memorizes a single utterance") {
  RnntModel model = TinyRnnt(24);
  std::mt19937_64 rng(5);
  const std::vector<Utterance> train(4, RandomUtterance(4, {2, 0}, 2, rng));
  Tape t0;
  const double start = RnntLoss(t0, model, train, Topology::kStandard).value()[0];
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 4;
  tc.learning_rate = 0.5;
  TrainRnnt(model, train, Topology::kStandard, tc);
  Tape t1;
  const double end = RnntLoss(t1, model, train, Topology::kStandard).value()[0];
  CHECK(end < 0.1 * start);
  CHECK(end < 0.2);
}

}  // namespace
}  // namespace rnnt
