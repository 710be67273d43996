// src/workbench.cc

#include "rnnt/workbench.h"

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "rnnt/error.h"

namespace rnnt {

using nlohmann::json;

RangeSpec ParseRange(const std::string &text) {
  RangeSpec r;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &r.lo, &r.hi, &r.step, &tail) != 3) {
    throw ArgumentError("range '" + text + "': expected lo:hi:step");
  }
  r.Values();  // validates
  return r;
}

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string &what) {
    throw ArgumentError("config: " + what);
  };
  if (data.vocab_size < 2) fail("data.vocab_size must be >= 2");
  if (data.feature_dim == 0) fail("data.feature_dim must be >= 1");
  if (!(data.noise >= 0)) fail("data.noise must be >= 0");
  if (data.min_length < 1 || data.max_length < data.min_length) {
    fail("need 1 <= data.min_length <= data.max_length");
  }
  if (data.min_duration < 1 || data.max_duration < data.min_duration) {
    fail("need 1 <= data.min_duration <= data.max_duration");
  }
  if (topology == Topology::kMonotonic && data.min_duration < 1) {
    fail("monotonic topology needs at least one frame per label");
  }
  if (data.sizes.train == 0 || data.sizes.dev == 0 || data.sizes.test == 0) {
    fail("every split needs at least one utterance");
  }
  if (data.text_sentences == 0 || data.text_dev_sentences == 0) {
    fail("text corpora must be non-empty");
  }
  if (lm.type != "ngram" && lm.type != "recurrent") {
    fail("lm.type must be 'ngram' or 'recurrent'");
  }
  if (lm.order < 1) fail("lm.order must be >= 1");
  if (!(lm.delta >= 0)) fail("lm.delta must be >= 0");
  for (const TrainConfig *t :
       {&rnnt_training, &lm_training, &ilm_training, &ilmt_training}) {
    if (!(t->learning_rate > 0) || t->batch_size == 0) {
      fail("training needs learning_rate > 0 and batch_size >= 1");
    }
  }
  if (!(ilmt_alpha >= 0) || !(exact_alpha >= 0)) fail("alphas must be >= 0");
  if (selection_beam == 0) fail("selection_beam must be >= 1");
  if (workers == 0) fail("workers must be >= 1");
  decode.Validate();
  lm_scale_range.Values();
  ilm_scale_range.Values();
  length_reward_range.Values();
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void RejectUnknown(const json &j, const std::string &where,
                   std::initializer_list<const char *> keys) {
  if (!j.is_object()) throw ArgumentError("config: '" + where + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto &[k, v] : j.items()) {
    if (!allowed.count(k)) {
      throw ArgumentError("config: unknown key '" + where + (where.empty() ? "" : ".") + k + "'");
    }
  }
}

template <typename T>
void Read(const json &j, const char *key, T &out, const std::string &where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception &) {
    throw ArgumentError("config: bad value for '" + where + "." + key + "'");
  }
}

json TrainJson(const TrainConfig &t) {
  return {{"learning_rate", t.learning_rate}, {"clip", t.clip},
          {"epochs", t.epochs},               {"batch_size", t.batch_size},
          {"patience", t.patience}};
}

void TrainFrom(const json &j, const std::string &where, TrainConfig &t) {
  // Shuffling seeds derive from the experiment seed.
  RejectUnknown(j, where, {"learning_rate", "clip", "epochs", "batch_size", "patience"});
  Read(j, "learning_rate", t.learning_rate, where);
  Read(j, "clip", t.clip, where);
  Read(j, "epochs", t.epochs, where);
  Read(j, "batch_size", t.batch_size, where);
  Read(j, "patience", t.patience, where);
}

json RangeJson(const RangeSpec &r) {
  return {{"lo", r.lo}, {"hi", r.hi}, {"step", r.step}};
}

void RangeFrom(const json &j, const std::string &where, RangeSpec &r) {
  RejectUnknown(j, where, {"lo", "hi", "step"});
  Read(j, "lo", r.lo, where);
  Read(j, "hi", r.hi, where);
  Read(j, "step", r.step, where);
}

json RecurrentJson(const RecurrentLmConfig &c) {
  return {{"embedding_dim", c.embedding_dim},
          {"hidden_units", c.hidden_units},
          {"layers", c.layers}};
}

void RecurrentFrom(const json &j, const std::string &where, RecurrentLmConfig &c) {
  RejectUnknown(j, where, {"embedding_dim", "hidden_units", "layers"});
  Read(j, "embedding_dim", c.embedding_dim, where);
  Read(j, "hidden_units", c.hidden_units, where);
  Read(j, "layers", c.layers, where);
}

}  // namespace

json ToJson(const FusionConfig &c) {
  return {{"lm_scale", c.lm_scale},
          {"ilm_scale", c.ilm_scale},
          {"length_reward", c.length_reward},
          {"ilm", IlmKindName(c.ilm)},
          {"renorm_eps", c.renorm_eps},
          {"beam", c.beam},
          {"score_beam", c.score_beam},
          {"recombination", RecombinationName(c.recombination)},
          {"max_labels_per_frame", c.max_labels_per_frame}};
}

json ToJson(const ExperimentConfig &c) {
  const auto &m = c.model;
  return {
      {"seed", c.seed},
      {"paths", {{"data", c.paths.data}, {"models", c.paths.models}, {"outputs", c.paths.outputs}}},
      {"data",
       {{"vocab_size", c.data.vocab_size},
        {"feature_dim", c.data.feature_dim},
        {"noise", c.data.noise},
        {"min_length", c.data.min_length},
        {"max_length", c.data.max_length},
        {"min_duration", c.data.min_duration},
        {"max_duration", c.data.max_duration},
        {"chain_successors", c.data.chain.successors},
        {"chain_floor_mass", c.data.chain.floor_mass},
        {"train", c.data.sizes.train},
        {"dev", c.data.sizes.dev},
        {"test", c.data.sizes.test},
        {"text_sentences", c.data.text_sentences},
        {"text_dev_sentences", c.data.text_dev_sentences}}},
      {"topology", TopologyName(c.topology)},
      {"model",
       {{"encoder_layers", m.encoder_layers},
        {"encoder_units", m.encoder_units},
        {"subsampling", m.subsampling},
        {"prediction_layers", m.prediction_layers},
        {"prediction_units", m.prediction_units},
        {"embedding_dim", m.embedding_dim},
        {"joint_units", m.joint_units},
        {"joint_tanh", m.joint_tanh}}},
      {"mini_ilm", {{"hidden_units", c.mini_hidden_units}, {"embedding_dim", c.mini_embedding_dim}}},
      {"lm",
       {{"type", c.lm.type},
        {"order", c.lm.order},
        {"delta", c.lm.delta},
        {"recurrent", RecurrentJson(c.lm.recurrent)}}},
      {"density_ratio", RecurrentJson(c.density_ratio)},
      {"training",
       {{"rnnt", TrainJson(c.rnnt_training)},
        {"lm", TrainJson(c.lm_training)},
        {"ilm", TrainJson(c.ilm_training)},
        {"ilmt", TrainJson(c.ilmt_training)},
        {"ilmt_alpha", c.ilmt_alpha},
        {"exact_alpha", c.exact_alpha},
        {"selection_beam", c.selection_beam}}},
      {"decode",
       {{"beam", c.decode.beam},
        {"score_beam", c.decode.score_beam},
        {"recombination", RecombinationName(c.decode.recombination)},
        {"max_labels_per_frame", c.decode.max_labels_per_frame}}},
      {"sweep",
       {{"lm_scale", RangeJson(c.lm_scale_range)},
        {"ilm_scale", RangeJson(c.ilm_scale_range)},
        {"length_reward", RangeJson(c.length_reward_range)}}},
      {"workers", c.workers}};
}

ExperimentConfig ConfigFromJson(const json &j) {
  ExperimentConfig c;
  RejectUnknown(j, "", {"seed", "paths", "data", "topology", "model", "mini_ilm", "lm",
                        "density_ratio", "training", "decode", "sweep", "workers"});
  Read(j, "seed", c.seed, "");
  Read(j, "workers", c.workers, "");
  if (j.contains("paths")) {
    const json &p = j["paths"];
    RejectUnknown(p, "paths", {"data", "models", "outputs"});
    Read(p, "data", c.paths.data, "paths");
    Read(p, "models", c.paths.models, "paths");
    Read(p, "outputs", c.paths.outputs, "paths");
  }
  if (j.contains("data")) {
    const json &d = j["data"];
    RejectUnknown(d, "data", {"vocab_size", "feature_dim", "noise", "min_length", "max_length",
                              "min_duration", "max_duration", "chain_successors",
                              "chain_floor_mass", "train", "dev", "test", "text_sentences",
                              "text_dev_sentences"});
    Read(d, "vocab_size", c.data.vocab_size, "data");
    Read(d, "feature_dim", c.data.feature_dim, "data");
    Read(d, "noise", c.data.noise, "data");
    Read(d, "min_length", c.data.min_length, "data");
    Read(d, "max_length", c.data.max_length, "data");
    Read(d, "min_duration", c.data.min_duration, "data");
    Read(d, "max_duration", c.data.max_duration, "data");
    Read(d, "chain_successors", c.data.chain.successors, "data");
    Read(d, "chain_floor_mass", c.data.chain.floor_mass, "data");
    Read(d, "train", c.data.sizes.train, "data");
    Read(d, "dev", c.data.sizes.dev, "data");
    Read(d, "test", c.data.sizes.test, "data");
    Read(d, "text_sentences", c.data.text_sentences, "data");
    Read(d, "text_dev_sentences", c.data.text_dev_sentences, "data");
  }
  if (j.contains("topology")) {
    std::string t;
    Read(j, "topology", t, "");
    c.topology = ParseTopology(t);
  }
  if (j.contains("model")) {
    const json &m = j["model"];
    RejectUnknown(m, "model", {"encoder_layers", "encoder_units", "subsampling",
                               "prediction_layers", "prediction_units", "embedding_dim",
                               "joint_units", "joint_tanh"});
    Read(m, "encoder_layers", c.model.encoder_layers, "model");
    Read(m, "encoder_units", c.model.encoder_units, "model");
    Read(m, "subsampling", c.model.subsampling, "model");
    Read(m, "prediction_layers", c.model.prediction_layers, "model");
    Read(m, "prediction_units", c.model.prediction_units, "model");
    Read(m, "embedding_dim", c.model.embedding_dim, "model");
    Read(m, "joint_units", c.model.joint_units, "model");
    Read(m, "joint_tanh", c.model.joint_tanh, "model");
  }
  if (j.contains("mini_ilm")) {
    const json &m = j["mini_ilm"];
    RejectUnknown(m, "mini_ilm", {"hidden_units", "embedding_dim"});
    Read(m, "hidden_units", c.mini_hidden_units, "mini_ilm");
    Read(m, "embedding_dim", c.mini_embedding_dim, "mini_ilm");
  }
  if (j.contains("lm")) {
    const json &l = j["lm"];
    RejectUnknown(l, "lm", {"type", "order", "delta", "recurrent"});
    Read(l, "type", c.lm.type, "lm");
    Read(l, "order", c.lm.order, "lm");
    Read(l, "delta", c.lm.delta, "lm");
    if (l.contains("recurrent")) RecurrentFrom(l["recurrent"], "lm.recurrent", c.lm.recurrent);
  }
  if (j.contains("density_ratio")) RecurrentFrom(j["density_ratio"], "density_ratio", c.density_ratio);
  if (j.contains("training")) {
    const json &t = j["training"];
    RejectUnknown(t, "training", {"rnnt", "lm", "ilm", "ilmt", "ilmt_alpha", "exact_alpha",
                                  "selection_beam"});
    if (t.contains("rnnt")) TrainFrom(t["rnnt"], "training.rnnt", c.rnnt_training);
    if (t.contains("lm")) TrainFrom(t["lm"], "training.lm", c.lm_training);
    if (t.contains("ilm")) TrainFrom(t["ilm"], "training.ilm", c.ilm_training);
    if (t.contains("ilmt")) TrainFrom(t["ilmt"], "training.ilmt", c.ilmt_training);
    Read(t, "ilmt_alpha", c.ilmt_alpha, "training");
    Read(t, "exact_alpha", c.exact_alpha, "training");
    Read(t, "selection_beam", c.selection_beam, "training");
  }
  if (j.contains("decode")) {
    const json &d = j["decode"];
    RejectUnknown(d, "decode", {"beam", "score_beam", "recombination", "max_labels_per_frame"});
    Read(d, "beam", c.decode.beam, "decode");
    Read(d, "score_beam", c.decode.score_beam, "decode");
    Read(d, "max_labels_per_frame", c.decode.max_labels_per_frame, "decode");
    if (d.contains("recombination")) {
      std::string r;
      Read(d, "recombination", r, "decode");
      c.decode.recombination = ParseRecombination(r);
    }
  }
  if (j.contains("sweep")) {
    const json &s = j["sweep"];
    RejectUnknown(s, "sweep", {"lm_scale", "ilm_scale", "length_reward"});
    if (s.contains("lm_scale")) RangeFrom(s["lm_scale"], "sweep.lm_scale", c.lm_scale_range);
    if (s.contains("ilm_scale")) RangeFrom(s["ilm_scale"], "sweep.ilm_scale", c.ilm_scale_range);
    if (s.contains("length_reward")) {
      RangeFrom(s["length_reward"], "sweep.length_reward", c.length_reward_range);
    }
  }
  c.model.vocab_size = c.data.vocab_size;
  c.model.feature_dim = c.data.feature_dim;
  c.Validate();
  return c;
}

ExperimentConfig LoadConfig(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error &e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
  return ConfigFromJson(j);
}

void SaveConfig(const std::string &path, const ExperimentConfig &config) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << ToJson(config).dump(2) << '\n';
  if (!os) throw IoError("write to '" + path + "' failed");
}

void ApplyEnvironment(ExperimentConfig &config) {
  if (const char *v = std::getenv("RNNT_ILM_DATA_DIR")) config.paths.data = v;
  if (const char *v = std::getenv("RNNT_ILM_MODEL_DIR")) config.paths.models = v;
  if (const char *v = std::getenv("RNNT_ILM_OUTPUT_DIR")) config.paths.outputs = v;
}

// ---------------------------------------------------------------------------
// Data

StageSeeds DeriveSeeds(uint64_t seed) {
  const uint64_t b = seed * 1000;
  return {b + 1, b + 2, b + 3, b + 4, b + 5, b + 6, b + 7, b + 8, b + 9, b + 10, b + 11, b + 12};
}

DomainPair MakeDomains(const ExperimentConfig &config) {
  const StageSeeds seeds = DeriveSeeds(config.seed);
  const auto &d = config.data;
  const Vocabulary vocab = Vocabulary::Synthetic(d.vocab_size);
  const auto prototypes = RandomPrototypes(d.vocab_size, d.feature_dim, seeds.prototypes);
  auto make = [&](uint64_t chain_seed) {
    DomainSpec spec = MakeDomain(vocab, prototypes,
                                 RandomChain(d.vocab_size, d.chain, chain_seed), d.noise);
    spec.min_length = d.min_length;
    spec.max_length = d.max_length;
    spec.min_duration = d.min_duration;
    spec.max_duration = d.max_duration;
    spec.Validate();
    return spec;
  };
  return {make(seeds.source_chain), make(seeds.target_chain)};
}

DataSet GenerateData(const ExperimentConfig &config) {
  config.Validate();
  const StageSeeds seeds = DeriveSeeds(config.seed);
  const DomainPair domains = MakeDomains(config);
  const SplitSizes &sizes = config.data.sizes;
  DataSet out;
  out.source = GenCorpus(domains.source, sizes, seeds.source_corpus);
  out.target = GenCorpus(domains.target, SplitSizes{sizes.dev, sizes.dev, sizes.test},
                         seeds.target_corpus);
  out.target_text = GenTextCorpus(domains.target, config.data.text_sentences, seeds.target_text);
  out.target_text_dev =
      GenTextCorpus(domains.target, config.data.text_dev_sentences, seeds.target_text_dev);
  return out;
}

void SaveDataSet(const std::string &dir, const DataSet &data) {
  SaveCorpus(dir + "/source", data.source);
  SaveCorpus(dir + "/target", data.target);
  SaveText(dir + "/target-text.txt", data.source.vocab, data.target_text);
  SaveText(dir + "/target-text-dev.txt", data.source.vocab, data.target_text_dev);
}

DataSet LoadDataSet(const std::string &dir) {
  DataSet out;
  out.source = LoadCorpus(dir + "/source");
  out.target = LoadCorpus(dir + "/target");
  if (!(out.source.vocab == out.target.vocab)) {
    throw DimensionError("data set '" + dir + "': source and target vocabularies differ");
  }
  out.target_text = LoadText(dir + "/target-text.txt", out.source.vocab);
  out.target_text_dev = LoadText(dir + "/target-text-dev.txt", out.source.vocab);
  return out;
}

std::vector<std::vector<int>> Transcriptions(const std::vector<Utterance> &utts) {
  std::vector<std::vector<int>> out;
  out.reserve(utts.size());
  for (const Utterance &u : utts) out.push_back(u.labels);
  return out;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

// Scores each utterance once and hands every (utterance, config) result to
// `sink` on the worker that produced it; worker w handles utterances
// w, w + workers, ...
void DecodeEach(const DecodeResources &resources, const std::vector<Utterance> &utts,
                const std::vector<FusionConfig> &configs, Topology topology, size_t workers,
                const std::function<void(size_t worker, size_t c, size_t u, DecodeResult &&)> &sink) {
  resources.Validate();
  for (const FusionConfig &c : configs) c.Validate();
  workers = std::max<size_t>(1, std::min(workers, utts.size()));
  auto work = [&](size_t first, std::exception_ptr &error) {
    try {
      for (size_t u = first; u < utts.size(); u += workers) {
        UtteranceScorer scorer(resources, utts[u].features);
        for (size_t c = 0; c < configs.size(); ++c) {
          sink(first, c, u, BeamSearch(scorer, configs[c], topology));
        }
      }
    } catch (...) {
      error = std::current_exception();
    }
  };
  std::vector<std::exception_ptr> errors(workers);
  if (workers == 1) {
    work(0, errors[0]);
  } else {
    std::vector<std::thread> threads;
    for (size_t w = 0; w < workers; ++w) threads.emplace_back(work, w, std::ref(errors[w]));
    for (auto &t : threads) t.join();
  }
  for (const auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<std::vector<DecodeResult>> DecodeCorpus(
    const DecodeResources &resources, const std::vector<Utterance> &utts,
    const std::vector<FusionConfig> &configs, Topology topology,
    size_t workers) {
  std::vector<std::vector<DecodeResult>> out(
      configs.size(), std::vector<DecodeResult>(utts.size()));
  DecodeEach(resources, utts, configs, topology, workers,
             [&](size_t, size_t c, size_t u, DecodeResult &&r) { out[c][u] = std::move(r); });
  return out;
}

// Keeps only the error counts, so memory does not grow with the grid size.
std::vector<ErrorCounts> ScoreCorpus(const DecodeResources &resources,
                                     const std::vector<Utterance> &utts,
                                     const std::vector<FusionConfig> &configs,
                                     Topology topology, size_t workers) {
  const size_t slots = std::max<size_t>(1, std::min(workers, utts.size()));
  std::vector<std::vector<ErrorCounts>> per_worker(slots, std::vector<ErrorCounts>(configs.size()));
  DecodeEach(resources, utts, configs, topology, workers,
             [&](size_t w, size_t c, size_t u, DecodeResult &&r) {
               per_worker[w][c] += EditAlign(utts[u].labels, r.best().labels);
             });
  std::vector<ErrorCounts> out(configs.size());
  for (const auto &counts : per_worker) {
    for (size_t c = 0; c < configs.size(); ++c) out[c] += counts[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training stages

namespace {

DevMetric NoLmDevWer(const ExperimentConfig &config, const RnntModel &model,
                     const std::vector<Utterance> &dev) {
  return [&config, &model, &dev] {
    DecodeResources r;
    r.model = &model;
    FusionConfig f = config.decode;
    f.lm_scale = f.ilm_scale = f.length_reward = 0.0;
    f.ilm = IlmKind::kNone;
    f.renorm_eps = false;
    f.beam = config.selection_beam;
    return ScoreCorpus(r, dev, {f}, config.topology, config.workers)[0].wer();
  };
}

TrainConfig Seeded(TrainConfig t, uint64_t seed) {
  t.seed = seed;
  return t;
}

}  // namespace

TrainCurve TrainBaseModel(const ExperimentConfig &config, const Corpus &corpus,
                          RnntModel &model) {
  if (corpus.vocab.size() != config.data.vocab_size ||
      corpus.feature_dim != config.data.feature_dim) {
    throw DimensionError("train-rnnt: corpus has |V| = " + std::to_string(corpus.vocab.size()) +
                         ", d = " + std::to_string(corpus.feature_dim) +
                         "; config expects " + std::to_string(config.data.vocab_size) +
                         ", " + std::to_string(config.data.feature_dim));
  }
  const StageSeeds seeds = DeriveSeeds(config.seed);
  RnntConfig rc = config.model;
  rc.vocab_size = corpus.vocab.size();
  rc.feature_dim = corpus.feature_dim;
  model = RnntModel(rc, corpus.vocab);
  model.Initialize(seeds.rnnt);
  return TrainRnnt(model, corpus.train, config.topology,
                   Seeded(config.rnnt_training, seeds.rnnt),
                   NoLmDevWer(config, model, corpus.dev));
}

std::unique_ptr<LanguageModel> TrainExternalLm(
    const ExperimentConfig &config, const Vocabulary &vocab,
    const std::vector<std::vector<int>> &text,
    const std::vector<std::vector<int>> &dev) {
  if (text.empty()) throw ArgumentError("train-lm: empty text corpus");
  if (config.lm.type == "ngram") {
    return std::make_unique<NgramLm>(TrainNgramLm(vocab, text, config.lm.order, config.lm.delta));
  }
  RecurrentLmConfig rc = config.lm.recurrent;
  rc.vocab_size = vocab.size();
  auto lm = std::make_unique<RecurrentLm>(rc, vocab, RecurrentLm::kExternalKind);
  const uint64_t seed = DeriveSeeds(config.seed).lm;
  lm->Initialize(seed);
  TrainRecurrentLm(*lm, text, dev, Seeded(config.lm_training, seed));
  return lm;
}

RecurrentLm TrainDensityRatioLm(const ExperimentConfig &config,
                                const Corpus &corpus) {
  RecurrentLmConfig rc = config.density_ratio;
  rc.vocab_size = corpus.vocab.size();
  RecurrentLm lm(rc, corpus.vocab, RecurrentLm::kDensityRatioKind);
  const uint64_t seed = DeriveSeeds(config.seed).density_ratio;
  lm.Initialize(seed);
  TrainRecurrentLm(lm, Transcriptions(corpus.train), Transcriptions(corpus.dev),
                   Seeded(config.lm_training, seed));
  return lm;
}

std::vector<AlignmentRecord> AlignCorpus(const RnntModel &model,
                                         const std::vector<Utterance> &utts,
                                         Topology topology) {
  std::vector<AlignmentRecord> out;
  out.reserve(utts.size());
  for (const Utterance &u : utts) {
    const PosteriorGrid grid = BuildPosteriorGrid(model, u.features, u.labels, topology);
    const AlignmentPath path = ViterbiAlign(grid, u.labels, topology);
    out.push_back(AlignmentRecord{u.id, topology, u.labels, path.frames});
  }
  return out;
}

std::vector<AlignedExample> AttachAlignments(
    const RnntModel &model, const std::vector<Utterance> &utts,
    const std::vector<AlignmentRecord> &records) {
  std::map<std::string, const AlignmentRecord *> by_id;
  for (const AlignmentRecord &r : records) by_id[r.id] = &r;
  std::vector<AlignedExample> out;
  out.reserve(utts.size());
  for (const Utterance &u : utts) {
    auto it = by_id.find(u.id);
    if (it == by_id.end()) throw ArgumentError("no alignment for utterance '" + u.id + "'");
    const AlignmentRecord &r = *it->second;
    if (r.labels != u.labels) {
      throw ArgumentError("alignment for '" + u.id + "' has a different transcription");
    }
    AlignedExample ex;
    ex.id = u.id;
    ex.labels = u.labels;
    ex.encoded = model.Encode(u.features);
    ex.frames = r.frames;
    for (size_t t : ex.frames) {
      if (t >= ex.encoded.rows()) {
        throw ArgumentError("alignment for '" + u.id + "' points past the last frame");
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

MiniIlmNet TrainMiniIlmNet(const ExperimentConfig &config,
                           const RnntModel &model,
                           const std::vector<AlignedExample> &train,
                           const std::vector<AlignedExample> &dev,
                           MiniIlmLoss loss, double alpha, TrainCurve *curve) {
  MiniIlmConfig mc;
  mc.vocab_size = model.vocab_size();
  mc.embedding_dim = config.mini_embedding_dim;
  mc.hidden_units = config.mini_hidden_units;
  mc.output_dim = model.encoder_dim();
  MiniIlmNet mini(mc, model.vocab());
  const uint64_t seed = DeriveSeeds(config.seed).mini;
  mini.Initialize(seed);
  TrainCurve c = TrainMiniIlm(model, mini, train, dev, loss, alpha,
                              Seeded(config.ilm_training, seed));
  if (curve) *curve = std::move(c);
  return mini;
}

RnntModel TrainIlmtModel(const ExperimentConfig &config, const RnntModel &base,
                         const Corpus &corpus, IlmKind kind, MiniIlmNet *mini,
                         TrainCurve *curve) {
  RnntModel model = base;
  const uint64_t seed = DeriveSeeds(config.seed).ilmt;
  TrainCurve c = FineTuneIlmt(model, corpus.train, config.topology, kind, config.ilmt_alpha,
                              Seeded(config.ilmt_training, seed),
                              NoLmDevWer(config, model, corpus.dev), mini);
  if (curve) *curve = std::move(c);
  return model;
}

// ---------------------------------------------------------------------------
// Comparisons

std::vector<MethodResult> CompareMethods(const ExperimentConfig &config,
                                         const std::vector<MethodSpec> &methods,
                                         const std::vector<Utterance> &dev,
                                         const std::vector<Utterance> &test) {
  std::vector<MethodResult> out;
  for (const MethodSpec &m : methods) {
    const std::vector<double> xs =
        m.sweep_lm_scale ? config.lm_scale_range.Values() : std::vector<double>{m.base.lm_scale};
    const std::vector<double> ys =
        m.sweep_ilm_scale ? config.ilm_scale_range.Values() : std::vector<double>{m.base.ilm_scale};
    std::vector<FusionConfig> cells;
    for (double x : xs) {
      for (double y : ys) {
        FusionConfig f = m.base;
        f.lm_scale = x;
        f.ilm_scale = y;
        cells.push_back(f);
      }
    }
    SweepResult sweep;
    try {
      sweep = MakeSweepResult(
          xs, ys, ScoreCorpus(m.resources, dev, cells, config.topology, config.workers));
    } catch (const std::exception &e) {
      throw Error("method '" + m.name + "': " + e.what());
    }
    MethodResult r;
    r.name = m.name;
    r.tuned = cells[sweep.best];
    r.dev = sweep.optimum().counts;
    r.test = ScoreCorpus(m.resources, test, {r.tuned}, config.topology, config.workers)[0];
    out.push_back(std::move(r));
  }
  return out;
}

Table ComparisonTable(const std::vector<MethodResult> &rows) {
  Table t;
  t.header = {"method", "lm-scale", "ilm-scale", "dev WER", "test WER", "Sub", "Del", "Ins"};
  for (const MethodResult &r : rows) {
    t.rows.push_back({r.name, FormatFixed(r.tuned.lm_scale, 2), FormatFixed(r.tuned.ilm_scale, 2),
                      FormatFixed(100.0 * r.dev.wer(), 2), FormatFixed(100.0 * r.test.wer(), 2),
                      FormatFixed(r.test.sub_rate(), 2), FormatFixed(r.test.del_rate(), 2),
                      FormatFixed(r.test.ins_rate(), 2)});
  }
  return t;
}

std::vector<AnalysisSpec> StandardAnalysis(const ExperimentConfig &config) {
  const auto lm = config.lm_scale_range.Values();
  const auto ilm = config.ilm_scale_range.Values();
  const auto reward = config.length_reward_range.Values();
  FusionConfig sf = config.decode;
  sf.lm_scale = sf.ilm_scale = sf.length_reward = 0.0;
  // SF rows run through the zero-ILM scorer with lambda2 pinned at 0, which
  // is bit-identical to plain SF and lets all rows share one scorer.
  sf.ilm = IlmKind::kZero;
  sf.renorm_eps = false;
  FusionConfig renorm = sf;
  renorm.renorm_eps = true;
  const FusionConfig zero = sf;
  using A = ScaleAxis;
  return {
      {"SF", sf, A::kLmScale, lm, A::kIlmScale, {0.0}, -1},
      {"SF + length reward", sf, A::kLmScale, lm, A::kLengthReward, reward, -1},
      {"zero + renorm-eps", renorm, A::kLmScale, lm, A::kIlmScale, ilm, -1},
      {"zero + renorm-eps + length reward", renorm, A::kLmScale, lm, A::kLengthReward, reward, 2},
      {"zero", zero, A::kLmScale, lm, A::kIlmScale, ilm, -1},
      {"zero + length reward", zero, A::kLmScale, lm, A::kLengthReward, reward, 4},
  };
}

BatchEvaluator CorpusEvaluator(const DecodeResources &resources,
                               const std::vector<Utterance> &utts,
                               Topology topology, size_t workers) {
  return [resources, &utts, topology, workers](const std::vector<FusionConfig> &configs) {
    return ScoreCorpus(resources, utts, configs, topology, workers);
  };
}

}  // namespace rnnt
