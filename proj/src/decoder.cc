// src/decoder.cc

#include "rnnt/decoder.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "rnnt/error.h"

namespace rnnt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool LabelAllowed(Topology topology, const FusionConfig &config, size_t t,
                  size_t s, size_t frames) {
  if (topology == Topology::kMonotonic) return s < frames;
  return s < (t + 1) * config.max_labels_per_frame;
}

double Merge(double a, double b, Recombination r) {
  return r == Recombination::kMax ? std::max(a, b) : kernels::LogAdd(a, b);
}

}  // namespace

std::string RecombinationName(Recombination r) {
  return r == Recombination::kMax ? "max" : "sum";
}

Recombination ParseRecombination(const std::string &name) {
  if (name == "sum" || name == "logsumexp") return Recombination::kLogSumExp;
  if (name == "max") return Recombination::kMax;
  throw ArgumentError("unknown recombination '" + name + "'");
}

void FusionConfig::Validate() const {
  if (!(lm_scale >= 0) || !(ilm_scale >= 0)) {
    throw ArgumentError("fusion: scales must be >= 0");
  }
  if (!std::isfinite(length_reward)) {
    throw ArgumentError("fusion: length reward must be finite");
  }
  if (beam < 1) throw ArgumentError("fusion: beam limit must be >= 1");
  if (!(score_beam > 0)) throw ArgumentError("fusion: score beam must be > 0");
  if (max_labels_per_frame < 1) {
    throw ArgumentError("fusion: max labels per frame must be >= 1");
  }
  if (renorm_eps && ilm == IlmKind::kNone) {
    throw ArgumentError("fusion: renorm-eps needs an ILM variant");
  }
}

std::vector<double> StepScores(std::span<const double> node,
                               std::span<const double> lm,
                               std::span<const double> ilm,
                               const FusionConfig &config) {
  const size_t V = node.size() - 1;
  const bool use_lm = !lm.empty() && config.lm_scale != 0.0;
  const bool use_ilm = config.ilm != IlmKind::kNone;
  if (use_lm && lm.size() != V + 1) {
    throw ShapeError("step scores: LM distribution has " +
                     std::to_string(lm.size()) + " entries, expected " +
                     std::to_string(V + 1));
  }
  if (use_ilm && ilm.size() != V) {
    throw ShapeError("step scores: ILM distribution has " +
                     std::to_string(ilm.size()) + " entries, expected " +
                     std::to_string(V));
  }
  std::vector<double> out(V + 1);
  out[V] = node[V];
  if (config.renorm_eps && use_ilm) {
    const double label_mass = kernels::LogSumExp(node.first(V));
    if (label_mass == kNegInf) {
      std::fill(out.begin(), out.begin() + V, kNegInf);
      return out;
    }
    std::vector<double> corrected(V);
    for (size_t a = 0; a < V; ++a) {
      corrected[a] = node[a] - config.ilm_scale * ilm[a];
    }
    const double shift = label_mass - kernels::LogSumExp(corrected);
    for (size_t a = 0; a < V; ++a) {
      double s = corrected[a] + shift;
      if (use_lm) s += config.lm_scale * lm[a];
      s += config.length_reward;
      out[a] = s;
    }
    return out;
  }
  for (size_t a = 0; a < V; ++a) {
    double s = node[a];
    if (use_lm) s += config.lm_scale * lm[a];
    if (use_ilm) s -= config.ilm_scale * ilm[a];
    s += config.length_reward;
    out[a] = s;
  }
  return out;
}

double FinalScore(std::span<const double> lm_log_probs,
                  const FusionConfig &config) {
  if (lm_log_probs.empty() || config.lm_scale == 0.0) return 0.0;
  return config.lm_scale * lm_log_probs.back();
}

void DecodeResources::Validate() const {
  if (model == nullptr) throw ArgumentError("decode: no transducer model");
  if (lm != nullptr && lm->vocab() != model->vocab()) {
    throw DimensionError("decode: external LM vocabulary (" +
                         std::to_string(lm->vocab_size()) +
                         " labels) differs from the transducer's (" +
                         std::to_string(model->vocab_size()) + ")");
  }
  ilm.Validate(*model);
}

// ---------------------------------------------------------------------------
// UtteranceScorer

UtteranceScorer::UtteranceScorer(const DecodeResources &resources,
                                 const Array &features)
    : resources_(resources) {
  resources_.Validate();
  if (features.rows() == 0) throw ArgumentError("decode: empty features");
  const RnntModel &model = *resources_.model;
  encoded_ = model.Encode(features);
  enc_proj_ = model.ProjectEncoder(encoded_);
  if (resources_.ilm.kind == IlmKind::kZero) {
    h_prime_ = Array(1, model.encoder_dim());
  } else if (resources_.ilm.kind == IlmKind::kAvg) {
    h_prime_ = kernels::MeanRows(encoded_);
  }
  nodes_.emplace_back();
}

int UtteranceScorer::Child(int node, int label) {
  auto it = nodes_[node].children.find(label);
  if (it != nodes_[node].children.end()) return it->second;
  TrieNode child;
  child.parent = node;
  child.label = label;
  child.history = nodes_[node].history;
  child.history.push_back(label);
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(child));
  nodes_[node].children.emplace(label, id);
  return id;
}

void UtteranceScorer::EnsurePrediction(int node) {
  if (nodes_[node].prediction_ready) return;
  const RnntModel &model = *resources_.model;
  PredictionState state;
  const int parent = nodes_[node].parent;
  if (parent < 0) {
    state = model.PredictStep(model.PredictInitial(), model.start_symbol());
  } else {
    EnsurePrediction(parent);
    state = model.PredictStep(nodes_[parent].prediction, nodes_[node].label);
  }
  TrieNode &n = nodes_[node];
  n.pred_proj = model.ProjectPrediction(state.output);
  n.prediction = std::move(state);
  n.joint.assign(frames(), {});
  n.prediction_ready = true;
}

std::span<const double> UtteranceScorer::NodeLogProbs(int node, size_t t) {
  EnsurePrediction(node);
  TrieNode &n = nodes_[node];
  if (n.joint[t].empty()) {
    const Array logits = resources_.model->JointFromProjections(
        kernels::TakeRow(enc_proj_, t), n.pred_proj);
    const Array lp = kernels::LogSoftmaxRows(logits);
    n.joint[t] = lp.values();
  }
  return n.joint[t];
}

void UtteranceScorer::EnsureLm(int node) {
  if (nodes_[node].lm_ready) return;
  const int parent = nodes_[node].parent;
  LmState state;
  if (parent < 0) {
    state = resources_.lm->Start();
  } else {
    EnsureLm(parent);
    state = resources_.lm->Step(nodes_[parent].lm, nodes_[node].label);
  }
  nodes_[node].lm = std::move(state);
  nodes_[node].lm_ready = true;
}

std::span<const double> UtteranceScorer::LmLogProbs(int node) {
  if (resources_.lm == nullptr) return {};
  EnsureLm(node);
  return nodes_[node].lm.log_probs.data();
}

void UtteranceScorer::EnsureIlm(int node) {
  if (nodes_[node].ilm_ready) return;
  const IlmVariant &v = resources_.ilm;
  const RnntModel &model = *resources_.model;
  const int parent = nodes_[node].parent;
  if (parent >= 0) EnsureIlm(parent);
  switch (v.kind) {
    case IlmKind::kNone:
      break;
    case IlmKind::kDensityRatio: {
      LmState st = parent < 0 ? v.density_ratio->Start()
                              : v.density_ratio->Step(nodes_[parent].ilm_lm,
                                                      nodes_[node].label);
      nodes_[node].ilm_log_probs = DropEos(st.log_probs);
      nodes_[node].ilm_lm = std::move(st);
      break;
    }
    case IlmKind::kZero:
    case IlmKind::kAvg:
      EnsurePrediction(node);
      nodes_[node].ilm_log_probs = IlmLogProbsFromPrediction(
          model, nodes_[node].prediction.output, h_prime_);
      break;
    case IlmKind::kMiniLstm: {
      MiniIlmNet::State st = parent < 0
                                 ? v.mini->Start()
                                 : v.mini->Step(nodes_[parent].mini,
                                                nodes_[node].label);
      EnsurePrediction(node);
      nodes_[node].ilm_log_probs = IlmLogProbsFromPrediction(
          model, nodes_[node].prediction.output, st.output);
      nodes_[node].mini = std::move(st);
      break;
    }
  }
  nodes_[node].ilm_ready = true;
}

std::span<const double> UtteranceScorer::IlmLogProbs(int node) {
  if (resources_.ilm.kind == IlmKind::kNone) return {};
  EnsureIlm(node);
  return nodes_[node].ilm_log_probs.data();
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Arc {
  int prev;    // index into the arc table, -1 at the start
  int symbol;
};

struct Hyp {
  int node;
  size_t t;
  double score;
  int arc;  // last arc of the best merged path
};

// A hypothesis before its trie node exists: `parent` extended by `label`,
// or `parent` itself when label < 0.
struct Candidate {
  int parent;
  int label;
  size_t t;
  double score;
  double best_path;  // score of the best single merged path
  int prev_arc;
  int symbol;
};

std::vector<int> Trace(const std::vector<Arc> &arcs, int arc) {
  std::vector<int> out;
  for (; arc >= 0; arc = arcs[arc].prev) out.push_back(arcs[arc].symbol);
  std::reverse(out.begin(), out.end());
  return out;
}

// Lexicographic order of the candidate histories.
bool HistoryLess(UtteranceScorer &scorer, const Candidate &a,
                 const Candidate &b) {
  const auto &ha = scorer.History(a.parent);
  const auto &hb = scorer.History(b.parent);
  const size_t la = ha.size() + (a.label >= 0);
  const size_t lb = hb.size() + (b.label >= 0);
  for (size_t i = 0; i < std::min(la, lb); ++i) {
    const int x = i < ha.size() ? ha[i] : a.label;
    const int y = i < hb.size() ? hb[i] : b.label;
    if (x != y) return x < y;
  }
  return la < lb;
}

}  // namespace

DecodeResult BeamSearch(UtteranceScorer &scorer, const FusionConfig &config,
                        Topology topology) {
  config.Validate();
  if (config.ilm != scorer.resources().ilm.kind) {
    throw ArgumentError("decode: config ILM variant " +
                        IlmKindName(config.ilm) +
                        " differs from the scorer's " +
                        IlmKindName(scorer.resources().ilm.kind));
  }
  const size_t T = scorer.frames();
  const int blank = static_cast<int>(scorer.vocab_size());
  const size_t V = scorer.vocab_size();

  std::vector<Arc> arcs;
  std::vector<Hyp> active{{UtteranceScorer::kRoot, 0, 0.0, -1}};
  std::vector<Hyp> finished;

  auto order = [&](const Candidate &a, const Candidate &b) {
    if (a.score != b.score) return a.score > b.score;
    return HistoryLess(scorer, a, b);
  };
  auto materialize = [&](const Candidate &c) {
    const int node = c.label < 0 ? c.parent : scorer.Child(c.parent, c.label);
    arcs.push_back(Arc{c.prev_arc, c.symbol});
    return Hyp{node, c.t, c.score, static_cast<int>(arcs.size() - 1)};
  };

  while (!active.empty()) {
    // (t, parent, label) identifies (t, history) uniquely.
    std::unordered_map<uint64_t, size_t> index;
    std::vector<Candidate> cands;
    auto add = [&](const Candidate &c) {
      const uint64_t key = (static_cast<uint64_t>(c.t) << 48) ^
                           (static_cast<uint64_t>(c.parent + 1) << 20) ^
                           static_cast<uint64_t>(c.label + 1);
      auto [it, fresh] = index.emplace(key, cands.size());
      if (fresh) {
        cands.push_back(c);
        return;
      }
      Candidate &old = cands[it->second];
      old.score = Merge(old.score, c.score, config.recombination);
      if (c.best_path > old.best_path) {
        old.best_path = c.best_path;
        old.prev_arc = c.prev_arc;
        old.symbol = c.symbol;
      }
    };

    for (const Hyp &h : active) {
      const std::vector<double> scores =
          StepScores(scorer.NodeLogProbs(h.node, h.t), scorer.LmLogProbs(h.node),
                     scorer.IlmLogProbs(h.node), config);
      const int parent = scorer.Parent(h.node);
      const double b = h.score + scores[V];
      // A blank keeps the history: re-express the node as (parent, label).
      add(Candidate{parent < 0 ? h.node : parent,
                    parent < 0 ? -1 : scorer.Label(h.node), h.t + 1, b, b,
                    h.arc, blank});
      const size_t s = scorer.History(h.node).size();
      if (!LabelAllowed(topology, config, h.t, s, T)) continue;
      const size_t nt = topology == Topology::kMonotonic ? h.t + 1 : h.t;
      for (size_t a = 0; a < V; ++a) {
        const double sc = h.score + scores[a];
        if (sc == kNegInf) continue;
        add(Candidate{h.node, static_cast<int>(a), nt, sc, sc, h.arc,
                      static_cast<int>(a)});
      }
    }

    std::vector<Candidate> next;
    for (const Candidate &c : cands) {
      if (c.score == kNegInf) continue;
      if (c.t == T) {
        finished.push_back(materialize(c));
      } else {
        next.push_back(c);
      }
    }
    std::sort(next.begin(), next.end(), order);
    if (next.size() > config.beam) next.resize(config.beam);
    active.clear();
    for (const Candidate &c : next) {
      if (c.score < next.front().score - config.score_beam) break;
      active.push_back(materialize(c));
    }
  }

  for (Hyp &h : finished) h.score += FinalScore(scorer.LmLogProbs(h.node), config);
  std::sort(finished.begin(), finished.end(), [&](const Hyp &x, const Hyp &y) {
    if (x.score != y.score) return x.score > y.score;
    return scorer.History(x.node) < scorer.History(y.node);
  });
  DecodeResult result;
  for (const Hyp &h : finished) {
    result.nbest.push_back(
        Hypothesis{scorer.History(h.node), h.score, Trace(arcs, h.arc)});
  }
  if (result.nbest.empty()) {
    throw InfeasibleError("decode: no hypothesis survived to the last frame");
  }
  return result;
}

DecodeResult BeamSearchDecode(const DecodeResources &resources,
                              const Array &features, const FusionConfig &config,
                              Topology topology) {
  UtteranceScorer scorer(resources, features);
  return BeamSearch(scorer, config, topology);
}

// ---------------------------------------------------------------------------
// Exhaustive search

namespace {

// Everything the enumeration carries down one branch.
struct ExhaustiveState {
  PredictionState prediction;
  LmState lm;
  IlmState ilm;
};

}  // namespace

Hypothesis ExhaustiveDecode(const DecodeResources &resources,
                            const Array &features, const FusionConfig &config,
                            Topology topology, size_t max_paths) {
  resources.Validate();
  config.Validate();
  if (config.ilm != resources.ilm.kind) {
    throw ArgumentError("exhaustive decode: ILM variant mismatch");
  }
  if (features.rows() == 0) throw ArgumentError("decode: empty features");
  const RnntModel &model = *resources.model;
  const Array encoded = model.Encode(features);
  const size_t T = encoded.rows();
  const size_t V = model.vocab_size();

  // Count the strings first so the guard fires before any work.
  {
    const size_t max_s = topology == Topology::kMonotonic
                             ? T
                             : T * config.max_labels_per_frame;
    // count[t][s]: number of completions from (t, s).
    std::vector<std::vector<double>> count(T + 1,
                                           std::vector<double>(max_s + 1, 1.0));
    // s runs downward: a standard-topology label reads count[t][s + 1].
    for (size_t t = T; t-- > 0;) {
      for (size_t s = max_s + 1; s-- > 0;) {
        double c = count[t + 1][s];
        if (LabelAllowed(topology, config, t, s, T)) {
          const size_t nt = topology == Topology::kMonotonic ? t + 1 : t;
          c += static_cast<double>(V) * count[nt][s + 1];
        }
        count[t][s] = c;
      }
    }
    if (count[0][0] > static_cast<double>(max_paths)) {
      throw ArgumentError("exhaustive decode: " + std::to_string(count[0][0]) +
                          " alignment strings exceed the guard of " +
                          std::to_string(max_paths));
    }
  }

  std::map<std::vector<int>, double> totals;
  std::vector<int> history;
  auto make_state = [&](const ExhaustiveState *prev, int label) {
    ExhaustiveState st;
    if (prev == nullptr) {
      st.prediction = model.PredictStep(model.PredictInitial(),
                                        model.start_symbol());
      if (resources.lm) st.lm = resources.lm->Start();
      st.ilm = IlmInit(resources.ilm, model, &encoded);
    } else {
      st.prediction = model.PredictStep(prev->prediction, label);
      if (resources.lm) st.lm = resources.lm->Step(prev->lm, label);
      st.ilm = IlmAdvance(resources.ilm, model, prev->ilm, label);
    }
    return st;
  };

  auto visit = [&](auto &&self, const ExhaustiveState &st, size_t t,
                   double score) -> void {
    if (t == T) {
      auto [it, fresh] = totals.emplace(history, score);
      if (!fresh) it->second = Merge(it->second, score, config.recombination);
      return;
    }
    Array logits = model.JointLogits(st.prediction.output,
                                     kernels::TakeRow(encoded, t));
    const Array node = kernels::LogSoftmaxRows(logits);
    std::span<const double> lm;
    if (resources.lm) lm = st.lm.log_probs.data();
    const std::vector<double> scores =
        StepScores(node.data(), lm, st.ilm.log_probs.data(), config);
    self(self, st, t + 1, score + scores[V]);
    if (!LabelAllowed(topology, config, t, history.size(), T)) return;
    const size_t nt = topology == Topology::kMonotonic ? t + 1 : t;
    for (size_t a = 0; a < V; ++a) {
      const ExhaustiveState child = make_state(&st, static_cast<int>(a));
      history.push_back(static_cast<int>(a));
      self(self, child, nt, score + scores[a]);
      history.pop_back();
    }
  };
  visit(visit, make_state(nullptr, -1), 0, 0.0);

  Hypothesis best;
  for (const auto &[labels, total] : totals) {
    LmState lm_state;
    double final_score = 0.0;
    if (resources.lm) {
      lm_state = resources.lm->Start();
      for (int a : labels) lm_state = resources.lm->Step(lm_state, a);
      final_score = FinalScore(lm_state.log_probs.data(), config);
    }
    const double score = total + final_score;
    if (score > best.score) best = Hypothesis{labels, score, {}};
  }
  return best;
}

// ---------------------------------------------------------------------------
// N-best files

void WriteNbest(std::ostream &os, const std::string &id,
                const DecodeResult &result, const Vocabulary &vocab) {
  for (size_t r = 0; r < result.nbest.size(); ++r) {
    const Hypothesis &h = result.nbest[r];
    char score[40];
    std::snprintf(score, sizeof(score), "%.17g", h.score);
    os << id << '\t' << (r + 1) << '\t' << score << '\t';
    for (size_t i = 0; i < h.labels.size(); ++i) {
      os << (i ? " " : "") << h.labels[i];
    }
    os << '\t' << vocab.Render(h.labels) << '\n';
  }
}

std::vector<NbestEntry> ReadNbest(std::istream &is, const Vocabulary &vocab,
                                  const std::string &name) {
  std::vector<NbestEntry> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (line.back() == '\t') fields.emplace_back();
    if (fields.size() != 5) {
      throw ParseError(name, lineno, "expected 5 tab-separated fields");
    }
    NbestEntry e;
    e.id = fields[0];
    try {
      e.rank = std::stoul(fields[1]);
      e.score = std::stod(fields[2]);
      std::istringstream ids(fields[3]);
      int v;
      while (ids >> v) e.labels.push_back(v);
    } catch (const std::exception &) {
      throw ParseError(name, lineno, "malformed rank or score");
    }
    if (vocab.Parse(fields[4]) != e.labels) {
      throw ParseError(name, lineno, "label ids and strings disagree");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace rnnt
