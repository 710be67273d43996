// tools/rnnt_ilm.cc
//
// Command-line front end. Every command resolves its inputs and outputs from
// flags, falling back to the config's path defaults, writes its outputs once
// and records a manifest at "<output>.manifest.json". A rerun whose manifest
// key matches and whose outputs are intact is skipped.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rnnt/error.h"
#include "rnnt/manifest.h"
#include "rnnt/model_io.h"
#include "rnnt/workbench.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rnnt;

namespace {

// Exit codes; docs/exit-codes.md lists them.
enum ExitCode {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingInput = 3,
  kIncompatible = 4,
  kMalformedInput = 5,
  kInvalidArgument = 6,
  kIoFailure = 7,
  kNumeric = 8,
};

class MissingInput : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<size_t> workers;
  bool force = false;
  bool quiet = false;
};

ExperimentConfig ResolveConfig(const Common &c) {
  ExperimentConfig config = c.config_path.empty() ? ExperimentConfig{} : LoadConfig(c.config_path);
  ApplyEnvironment(config);
  if (c.seed) config.seed = *c.seed;
  if (c.workers) config.workers = *c.workers;
  config.Validate();
  return config;
}

void RequireInput(const std::string &path) {
  if (!fs::exists(path)) throw MissingInput("missing input '" + path + "'");
}

json SeedsJson(const ExperimentConfig &config) {
  const StageSeeds s = DeriveSeeds(config.seed);
  return {{"experiment", config.seed},   {"prototypes", s.prototypes},
          {"source_chain", s.source_chain}, {"target_chain", s.target_chain},
          {"source_corpus", s.source_corpus}, {"target_corpus", s.target_corpus},
          {"target_text", s.target_text},   {"target_text_dev", s.target_text_dev},
          {"rnnt", s.rnnt},                 {"lm", s.lm},
          {"density_ratio", s.density_ratio}, {"mini", s.mini},
          {"ilmt", s.ilmt}};
}

// Runs `body` under manifest bookkeeping. `outputs` are the paths the body
// creates; the manifest sits beside the first one.
struct Job {
  Job(std::string cmd, const Common *c, ExperimentConfig cfg)
      : command(std::move(cmd)), common(c), config(std::move(cfg)) {}

  std::string command;
  const Common *common = nullptr;
  ExperimentConfig config;
  json arguments;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

int Execute(const Job &job, const std::function<json()> &body) {
  for (const std::string &in : job.inputs) RequireInput(in);
  const auto input_digests = DigestPaths(job.inputs);
  json args = job.arguments;
  args["config"] = ToJson(job.config);
  const json seeds = SeedsJson(job.config);
  const std::string key = ManifestKey(job.command, args, seeds, input_digests);
  const std::string manifest_path = ManifestPath(job.outputs.front());
  if (!job.common->force && UpToDate(manifest_path, key)) {
    if (!job.common->quiet) std::cerr << job.command << ": up to date (" << manifest_path << ")\n";
    return kOk;
  }
  for (const std::string &out : job.outputs) {
    const fs::path parent = fs::path(out).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory '" + parent.string() + "'");
  }
  RunManifest m;
  m.command = job.command;
  m.arguments = args;
  m.seeds = seeds;
  m.inputs = input_digests;
  m.started_at = UtcTimestamp();
  m.key = key;
  const auto t0 = std::chrono::steady_clock::now();
  const json report = body();
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.outputs = DigestPaths(job.outputs);
  m.report = report;
  WriteManifest(manifest_path, m);
  return kOk;
}

json CurveJson(const TrainCurve &curve) {
  json epochs = json::array();
  for (const EpochRecord &e : curve.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"dev_metric", std::isnan(e.dev_metric) ? json(nullptr) : json(e.dev_metric)}});
  }
  return {{"epochs", epochs}, {"best_epoch", curve.best_epoch}};
}

void Log(const Common &c, const std::string &line) {
  if (!c.quiet) std::cerr << line << '\n';
}

// Options shared by the commands that decode.
struct DecodeFlags {
  std::string model, lm, dr_lm, mini, data, domain = "target", split;
  std::string ilm_variant = "none";
  std::string recomb;
  std::string topology;
  std::string fusion;  // JSON written by sweep
  double lm_scale = 0.0, ilm_scale = 0.0, length_reward = 0.0;
  bool renorm_eps = false;
  std::optional<size_t> beam;
  std::optional<double> score_beam;

  void Add(CLI::App *app, bool scales) {
    app->add_option("--model", model, "Transducer model file");
    app->add_option("--lm", lm, "External LM file (omit for no LM)");
    app->add_option("--dr-lm", dr_lm, "Density-ratio LM file");
    app->add_option("--mini", mini, "Mini-LSTM ILM file");
    app->add_option("--data", data, "Data directory written by gen-data");
    app->add_option("--domain", domain, "source or target")->check(CLI::IsMember({"source", "target"}));
    app->add_option("--ilm-variant", ilm_variant, "none, density-ratio, zero, avg or mini-lstm")
        ->check(CLI::IsMember({"none", "density-ratio", "zero", "avg", "mini-lstm"}));
    app->add_option("--recomb", recomb, "Hypothesis recombination: sum or max")
        ->check(CLI::IsMember({"sum", "max"}));
    app->add_option("--topology", topology, "standard or monotonic")
        ->check(CLI::IsMember({"standard", "monotonic"}));
    app->add_option("--beam", beam, "Beam limit (default 128)");
    app->add_option("--score-beam", score_beam, "Score pruning width in log space (default 12)");
    if (scales) {
      app->add_option("--lm-scale", lm_scale, "lambda1");
      app->add_option("--ilm-scale", ilm_scale, "lambda2");
      app->add_option("--length-reward", length_reward, "Reward per emitted label");
      app->add_flag("--renorm-eps", renorm_eps, "Renormalize the corrected labels into 1 - P(blank)");
      app->add_option("--fusion", fusion, "Fusion settings JSON written by sweep");
    }
  }

  void Resolve(ExperimentConfig &config) {
    if (model.empty()) model = config.paths.models + "/rnnt.json";
    if (data.empty()) data = config.paths.data;
    if (!topology.empty()) config.topology = ParseTopology(topology);
    if (beam) config.decode.beam = *beam;
    if (score_beam) config.decode.score_beam = *score_beam;
    if (!recomb.empty()) config.decode.recombination = ParseRecombination(recomb);
    config.Validate();
  }

  FusionConfig Fusion(const ExperimentConfig &config) const {
    FusionConfig f = config.decode;
    if (!fusion.empty()) {
      std::ifstream is(fusion);
      if (!is) throw MissingInput("missing input '" + fusion + "'");
      json j;
      try {
        j = json::parse(is);
      } catch (const json::exception &e) {
        throw FormatError("fusion file '" + fusion + "': " + e.what());
      }
      const json &t = j.contains("tuned") ? j["tuned"] : j;
      try {
        f.lm_scale = t.at("lm_scale").get<double>();
        f.ilm_scale = t.at("ilm_scale").get<double>();
        f.length_reward = t.at("length_reward").get<double>();
        f.ilm = ParseIlmKind(t.at("ilm").get<std::string>());
        f.renorm_eps = t.at("renorm_eps").get<bool>();
        f.beam = t.at("beam").get<size_t>();
        f.score_beam = t.at("score_beam").get<double>();
        f.recombination = ParseRecombination(t.at("recombination").get<std::string>());
        f.max_labels_per_frame = t.at("max_labels_per_frame").get<size_t>();
      } catch (const json::exception &e) {
        throw FormatError("fusion file '" + fusion + "': " + e.what());
      }
    } else {
      f.lm_scale = lm_scale;
      f.ilm_scale = ilm_scale;
      f.length_reward = length_reward;
      f.ilm = ParseIlmKind(ilm_variant);
      f.renorm_eps = renorm_eps;
    }
    f.Validate();
    return f;
  }

  std::vector<std::string> Inputs(IlmKind kind) const {
    std::vector<std::string> in = {model, data + "/" + domain};
    if (!lm.empty()) in.push_back(lm);
    if (kind == IlmKind::kDensityRatio) in.push_back(dr_lm);
    if (kind == IlmKind::kMiniLstm) in.push_back(mini);
    return in;
  }

  json Arguments() const {
    return {{"model", model},   {"lm", lm},         {"dr_lm", dr_lm},
            {"mini", mini},     {"data", data},     {"domain", domain},
            {"split", split},   {"fusion", fusion}, {"ilm_variant", ilm_variant},
            {"lm_scale", lm_scale}, {"ilm_scale", ilm_scale},
            {"length_reward", length_reward}, {"renorm_eps", renorm_eps}};
  }
};

// Models loaded for decoding; owns everything DecodeResources points to.
struct LoadedModels {
  RnntModel model;
  std::unique_ptr<LanguageModel> lm;
  std::optional<RecurrentLm> dr;
  std::optional<MiniIlmNet> mini;
  DecodeResources resources;
};

void CheckVocab(const Vocabulary &expected, const Vocabulary &got, const std::string &what) {
  if (!(expected == got)) {
    throw DimensionError(what + " vocabulary differs from the corpus vocabulary");
  }
}

void LoadModels(const DecodeFlags &flags, IlmKind kind, const Vocabulary &vocab,
                LoadedModels &out) {
  out.model = LoadRnntModel(flags.model, vocab.size());
  CheckVocab(vocab, out.model.vocab(), "model '" + flags.model + "'");
  out.resources.model = &out.model;
  if (!flags.lm.empty()) {
    out.lm = LoadLanguageModel(flags.lm, vocab.size());
    CheckVocab(vocab, out.lm->vocab(), "LM '" + flags.lm + "'");
    out.resources.lm = out.lm.get();
  }
  out.resources.ilm.kind = kind;
  if (kind == IlmKind::kDensityRatio) {
    if (flags.dr_lm.empty()) throw ArgumentError("--ilm-variant density-ratio needs --dr-lm");
    out.dr = LoadDensityRatioLm(flags.dr_lm, vocab.size());
    CheckVocab(vocab, out.dr->vocab(), "density-ratio LM '" + flags.dr_lm + "'");
    out.resources.ilm.density_ratio = &*out.dr;
  }
  if (kind == IlmKind::kMiniLstm) {
    if (flags.mini.empty()) throw ArgumentError("--ilm-variant mini-lstm needs --mini");
    out.mini = LoadMiniIlm(flags.mini, vocab.size());
    CheckVocab(vocab, out.mini->vocab(), "mini-LSTM '" + flags.mini + "'");
    out.resources.ilm.mini = &*out.mini;
  }
  out.resources.Validate();
}

const std::vector<Utterance> &Split(const Corpus &corpus, const std::string &split) {
  if (split == "train") return corpus.train;
  if (split == "dev") return corpus.dev;
  if (split == "test") return corpus.test;
  throw ArgumentError("unknown split '" + split + "'");
}

void SaveLanguageModel(const std::string &path, const LanguageModel &lm) {
  if (auto *n = dynamic_cast<const NgramLm *>(&lm)) return SaveModel(path, *n);
  if (auto *r = dynamic_cast<const RecurrentLm *>(&lm)) return SaveModel(path, *r);
  throw ArgumentError("unsupported LM kind '" + lm.kind() + "'");
}

void WriteText(const std::string &path, const std::string &text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::map<std::string, std::vector<int>> Refs(const std::vector<Utterance> &utts) {
  std::map<std::string, std::vector<int>> out;
  for (const Utterance &u : utts) out[u.id] = u.labels;
  return out;
}

int Run(int argc, char **argv) {
  CLI::App app{"Transducer ILM-correction workbench"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Experiment config (JSON)");
  app.add_option("--seed", common.seed, "Override the experiment seed");
  app.add_option("--workers", common.workers, "Decode worker threads");
  app.add_flag("--force", common.force, "Rerun even when the manifest is up to date");
  app.add_flag("-q,--quiet", common.quiet, "No progress output");
  std::function<int()> action;

  // gen-data
  std::string gen_out;
  auto *gen = app.add_subcommand("gen-data", "Generate source/target corpora and LM text");
  gen->add_option("--out", gen_out, "Output directory (default: paths.data)");
  gen->callback([&] {
    action = [&] {
      Job job("gen-data", &common, ResolveConfig(common));
      if (gen_out.empty()) gen_out = job.config.paths.data;
      job.arguments = {{"out", gen_out}};
      job.outputs = {gen_out};
      return Execute(job, [&] {
        const DataSet data = GenerateData(job.config);
        SaveDataSet(gen_out, data);
        const DomainPair d = MakeDomains(job.config);
        json domains = {{"source_transitions", d.source.transitions},
                        {"target_transitions", d.target.transitions},
                        {"source_initial", d.source.initial},
                        {"target_initial", d.target.initial},
                        {"prototypes", d.source.prototypes}};
        WriteText(gen_out + "/domains.json", domains.dump(1) + "\n");
        Log(common, "gen-data: wrote " + gen_out);
        return json{{"train", data.source.train.size()},
                    {"dev", data.source.dev.size()},
                    {"test", data.source.test.size()},
                    {"target_text", data.target_text.size()}};
      });
    };
  });

  // train-rnnt
  std::string tr_data, tr_out;
  auto *train_rnnt = app.add_subcommand("train-rnnt", "Train the base transducer on the source corpus");
  train_rnnt->add_option("--data", tr_data, "Data directory (default: paths.data)");
  train_rnnt->add_option("--out", tr_out, "Model file (default: <models>/rnnt.json)");
  train_rnnt->callback([&] {
    action = [&] {
      Job job("train-rnnt", &common, ResolveConfig(common));
      if (tr_data.empty()) tr_data = job.config.paths.data;
      if (tr_out.empty()) tr_out = job.config.paths.models + "/rnnt.json";
      job.arguments = {{"data", tr_data}, {"out", tr_out}};
      job.inputs = {tr_data + "/source"};
      job.outputs = {tr_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(tr_data + "/source");
        RnntModel model;
        const TrainCurve curve = TrainBaseModel(job.config, corpus, model);
        SaveModel(tr_out, model);
        Log(common, "train-rnnt: best epoch " + std::to_string(curve.best_epoch) + ", wrote " + tr_out);
        return json{{"curve", CurveJson(curve)}};
      });
    };
  });

  // train-lm
  std::string lm_data, lm_out, lm_type;
  auto *train_lm = app.add_subcommand("train-lm", "Train the external LM on target-domain text");
  train_lm->add_option("--data", lm_data, "Data directory (default: paths.data)");
  train_lm->add_option("--type", lm_type, "ngram or recurrent (default from config)")
      ->check(CLI::IsMember({"ngram", "recurrent"}));
  train_lm->add_option("--out", lm_out, "LM file (default: <models>/lm.json)");
  train_lm->callback([&] {
    action = [&] {
      Job job("train-lm", &common, ResolveConfig(common));
      if (!lm_type.empty()) job.config.lm.type = lm_type;
      if (lm_data.empty()) lm_data = job.config.paths.data;
      if (lm_out.empty()) lm_out = job.config.paths.models + "/lm.json";
      job.arguments = {{"data", lm_data}, {"out", lm_out}};
      job.inputs = {lm_data + "/source/manifest.txt", lm_data + "/target-text.txt",
                    lm_data + "/target-text-dev.txt"};
      job.outputs = {lm_out};
      return Execute(job, [&] {
        const Vocabulary vocab = LoadCorpus(lm_data + "/source").vocab;
        const auto text = LoadText(lm_data + "/target-text.txt", vocab);
        const auto dev = LoadText(lm_data + "/target-text-dev.txt", vocab);
        const auto lm = TrainExternalLm(job.config, vocab, text, dev);
        SaveLanguageModel(lm_out, *lm);
        double nll = 0.0;
        size_t tokens = 0;
        for (const auto &s : dev) {
          nll -= lm->SequenceLogProb(s);
          tokens += s.size() + 1;
        }
        const double ppl = std::exp(nll / static_cast<double>(tokens));
        Log(common, "train-lm: dev perplexity " + FormatFixed(ppl, 3) + ", wrote " + lm_out);
        return json{{"dev_perplexity", ppl}};
      });
    };
  });

  // train-dr-lm
  std::string dr_data, dr_out;
  auto *train_dr = app.add_subcommand("train-dr-lm", "Train the density-ratio LM on source transcriptions");
  train_dr->add_option("--data", dr_data, "Data directory (default: paths.data)");
  train_dr->add_option("--out", dr_out, "LM file (default: <models>/dr-lm.json)");
  train_dr->callback([&] {
    action = [&] {
      Job job("train-dr-lm", &common, ResolveConfig(common));
      if (dr_data.empty()) dr_data = job.config.paths.data;
      if (dr_out.empty()) dr_out = job.config.paths.models + "/dr-lm.json";
      job.arguments = {{"data", dr_data}, {"out", dr_out}};
      job.inputs = {dr_data + "/source"};
      job.outputs = {dr_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(dr_data + "/source");
        const RecurrentLm lm = TrainDensityRatioLm(job.config, corpus);
        SaveModel(dr_out, lm);
        Log(common, "train-dr-lm: wrote " + dr_out);
        return json::object();
      });
    };
  });

  // align
  std::string al_model, al_data, al_split = "train", al_domain = "source", al_out, al_topology;
  auto *align = app.add_subcommand("align", "Write Viterbi alignments of a corpus split");
  align->add_option("--model", al_model, "Transducer model (default: <models>/rnnt.json)");
  align->add_option("--data", al_data, "Data directory (default: paths.data)");
  align->add_option("--domain", al_domain, "source or target")->check(CLI::IsMember({"source", "target"}));
  align->add_option("--split", al_split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  align->add_option("--topology", al_topology, "standard or monotonic")
      ->check(CLI::IsMember({"standard", "monotonic"}));
  align->add_option("--out", al_out, "Alignment file (default: <models>/align-<split>.txt)");
  align->callback([&] {
    action = [&] {
      Job job("align", &common, ResolveConfig(common));
      if (!al_topology.empty()) job.config.topology = ParseTopology(al_topology);
      if (al_model.empty()) al_model = job.config.paths.models + "/rnnt.json";
      if (al_data.empty()) al_data = job.config.paths.data;
      if (al_out.empty()) al_out = job.config.paths.models + "/align-" + al_split + ".txt";
      job.arguments = {{"model", al_model}, {"data", al_data}, {"domain", al_domain},
                       {"split", al_split}, {"out", al_out}};
      job.inputs = {al_model, al_data + "/" + al_domain};
      job.outputs = {al_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(al_data + "/" + al_domain);
        const RnntModel model = LoadRnntModel(al_model, corpus.vocab.size());
        CheckVocab(corpus.vocab, model.vocab(), "model '" + al_model + "'");
        SaveAlignments(al_out, corpus.vocab,
                       AlignCorpus(model, Split(corpus, al_split), job.config.topology));
        Log(common, "align: wrote " + al_out);
        return json::object();
      });
    };
  });

  // train-ilm
  std::string ilm_model, ilm_data, ilm_loss = "plain", ilm_align, ilm_out;
  std::optional<double> ilm_alpha;
  auto *train_ilm = app.add_subcommand("train-ilm", "Train the mini-LSTM ILM against a fixed transducer");
  train_ilm->add_option("--model", ilm_model, "Transducer model (default: <models>/rnnt.json)");
  train_ilm->add_option("--data", ilm_data, "Data directory (default: paths.data)");
  train_ilm->add_option("--loss", ilm_loss, "plain or exact")->check(CLI::IsMember({"plain", "exact"}));
  train_ilm->add_option("--alpha", ilm_alpha, "Weight of the J' term (exact; default training.exact_alpha = 1.0)");
  train_ilm->add_option("--alignments", ilm_align,
                        "Train-split alignments for exact (default: <models>/align-train.txt)");
  train_ilm->add_option("--out", ilm_out, "Mini-LSTM file (default: <models>/mini-<loss>.json)");
  train_ilm->callback([&] {
    action = [&] {
      Job job("train-ilm", &common, ResolveConfig(common));
      const bool exact = ilm_loss == "exact";
      const double alpha = ilm_alpha ? *ilm_alpha : job.config.exact_alpha;
      if (!(alpha >= 0)) throw ArgumentError("--alpha must be >= 0");
      if (ilm_model.empty()) ilm_model = job.config.paths.models + "/rnnt.json";
      if (ilm_data.empty()) ilm_data = job.config.paths.data;
      if (ilm_align.empty() && exact) ilm_align = job.config.paths.models + "/align-train.txt";
      if (ilm_out.empty()) ilm_out = job.config.paths.models + "/mini-" + ilm_loss + ".json";
      job.arguments = {{"model", ilm_model}, {"data", ilm_data}, {"loss", ilm_loss},
                       {"alpha", exact ? alpha : 0.0}, {"alignments", ilm_align}, {"out", ilm_out}};
      job.inputs = {ilm_model, ilm_data + "/source"};
      if (exact) job.inputs.push_back(ilm_align);
      job.outputs = {ilm_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(ilm_data + "/source");
        const RnntModel model = LoadRnntModel(ilm_model, corpus.vocab.size());
        CheckVocab(corpus.vocab, model.vocab(), "model '" + ilm_model + "'");
        std::vector<AlignedExample> train, dev;
        if (exact) {
          train = AttachAlignments(model, corpus.train, LoadAlignments(ilm_align, corpus.vocab));
        } else {
          for (const Utterance &u : corpus.train) train.push_back({u.id, u.labels, {}, {}});
        }
        for (const Utterance &u : corpus.dev) dev.push_back({u.id, u.labels, {}, {}});
        TrainCurve curve;
        const MiniIlmNet mini =
            TrainMiniIlmNet(job.config, model, train, dev,
                            exact ? MiniIlmLoss::kExact : MiniIlmLoss::kPlain,
                            exact ? alpha : 0.0, &curve);
        SaveModel(ilm_out, mini);
        Log(common, "train-ilm: best epoch " + std::to_string(curve.best_epoch) + ", wrote " + ilm_out);
        return json{{"curve", CurveJson(curve)}};
      });
    };
  });

  // train-ilmt
  std::string it_model, it_data, it_variant = "zero", it_mini, it_out, it_mini_out;
  std::optional<double> it_alpha;
  auto *train_ilmt = app.add_subcommand("train-ilmt", "Fine-tune prediction and joint networks with L_RNNT + alpha L_ILM");
  train_ilmt->add_option("--model", it_model, "Base transducer (default: <models>/rnnt.json)");
  train_ilmt->add_option("--data", it_data, "Data directory (default: paths.data)");
  train_ilmt->add_option("--ilm-variant", it_variant, "zero, avg or mini-lstm")
      ->check(CLI::IsMember({"zero", "avg", "mini-lstm"}));
  train_ilmt->add_option("--alpha", it_alpha, "ILM loss weight (default 0.2)");
  train_ilmt->add_option("--mini", it_mini, "Initial mini-LSTM (mini-lstm variant)");
  train_ilmt->add_option("--out", it_out, "Model file (default: <models>/rnnt-ilmt-<variant>.json)");
  train_ilmt->add_option("--mini-out", it_mini_out, "Fine-tuned mini-LSTM (default: <models>/mini-ilmt.json)");
  train_ilmt->callback([&] {
    action = [&] {
      Job job("train-ilmt", &common, ResolveConfig(common));
      if (it_alpha) job.config.ilmt_alpha = *it_alpha;
      job.config.Validate();
      const IlmKind kind = ParseIlmKind(it_variant);
      if (it_model.empty()) it_model = job.config.paths.models + "/rnnt.json";
      if (it_data.empty()) it_data = job.config.paths.data;
      if (it_out.empty()) it_out = job.config.paths.models + "/rnnt-ilmt-" + it_variant + ".json";
      job.arguments = {{"model", it_model}, {"data", it_data}, {"ilm_variant", it_variant},
                       {"mini", it_mini}, {"out", it_out}};
      job.inputs = {it_model, it_data + "/source"};
      job.outputs = {it_out};
      if (kind == IlmKind::kMiniLstm) {
        if (it_mini.empty()) throw ArgumentError("--ilm-variant mini-lstm needs --mini");
        if (it_mini_out.empty()) it_mini_out = job.config.paths.models + "/mini-ilmt.json";
        job.inputs.push_back(it_mini);
        job.outputs.push_back(it_mini_out);
        job.arguments["mini_out"] = it_mini_out;
      }
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(it_data + "/source");
        const RnntModel base = LoadRnntModel(it_model, corpus.vocab.size());
        CheckVocab(corpus.vocab, base.vocab(), "model '" + it_model + "'");
        std::optional<MiniIlmNet> mini;
        if (kind == IlmKind::kMiniLstm) mini = LoadMiniIlm(it_mini, corpus.vocab.size());
        TrainCurve curve;
        const RnntModel tuned =
            TrainIlmtModel(job.config, base, corpus, kind, mini ? &*mini : nullptr, &curve);
        SaveModel(it_out, tuned);
        if (mini) SaveModel(it_mini_out, *mini);
        Log(common, "train-ilmt: best epoch " + std::to_string(curve.best_epoch) + ", wrote " + it_out);
        return json{{"curve", CurveJson(curve)}};
      });
    };
  });

  // decode
  DecodeFlags dec;
  dec.split = "test";
  std::string dec_out;
  size_t dec_nbest = 5;
  auto *decode = app.add_subcommand("decode", "Beam-search decode a corpus split and write n-best lists");
  dec.Add(decode, true);
  decode->add_option("--split", dec.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  decode->add_option("--nbest", dec_nbest, "Hypotheses written per utterance")->check(CLI::PositiveNumber);
  decode->add_option("--out", dec_out, "N-best file (default: <outputs>/decode-<domain>-<split>.nbest)");
  decode->callback([&] {
    action = [&] {
      Job job("decode", &common, ResolveConfig(common));
      dec.Resolve(job.config);
      const FusionConfig fusion = dec.Fusion(job.config);
      if (dec_out.empty()) {
        dec_out = job.config.paths.outputs + "/decode-" + dec.domain + "-" + dec.split + ".nbest";
      }
      job.arguments = dec.Arguments();
      job.arguments["resolved_fusion"] = ToJson(fusion);
      job.arguments["nbest"] = dec_nbest;
      job.arguments["out"] = dec_out;
      job.inputs = dec.Inputs(fusion.ilm);
      if (!dec.fusion.empty()) job.inputs.push_back(dec.fusion);
      job.outputs = {dec_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(dec.data + "/" + dec.domain);
        LoadedModels models;
        LoadModels(dec, fusion.ilm, corpus.vocab, models);
        const auto &utts = Split(corpus, dec.split);
        const auto results =
            DecodeCorpus(models.resources, utts, {fusion}, job.config.topology, job.config.workers)[0];
        std::ofstream os(dec_out);
        if (!os) throw IoError("cannot open '" + dec_out + "' for writing");
        ErrorCounts counts;
        for (size_t u = 0; u < utts.size(); ++u) {
          DecodeResult r = results[u];
          if (r.nbest.size() > dec_nbest) r.nbest.resize(dec_nbest);
          WriteNbest(os, utts[u].id, r, corpus.vocab);
          counts += EditAlign(utts[u].labels, r.best().labels);
        }
        if (!os) throw IoError("write to '" + dec_out + "' failed");
        Log(common, "decode: WER " + FormatFixed(100.0 * counts.wer(), 2) + "% on " +
                        dec.domain + "/" + dec.split + ", wrote " + dec_out);
        return json{{"wer", counts.wer()}, {"errors", counts.errors()}, {"ref_len", counts.ref_len}};
      });
    };
  });

  // sweep
  DecodeFlags sw;
  sw.split = "dev";
  std::string sw_out, sw_lm_range, sw_ilm_range;
  auto *sweep = app.add_subcommand("sweep", "Grid-search lambda1 x lambda2 on a corpus split");
  sw.Add(sweep, false);
  sweep->add_option("--split", sw.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  sweep->add_flag("--renorm-eps", sw.renorm_eps, "Sweep renorm-eps scoring");
  sweep->add_option("--length-reward", sw.length_reward, "Fixed reward per emitted label");
  sweep->add_option("--lm-scale-range", sw_lm_range, "lo:hi:step (default from config)");
  sweep->add_option("--ilm-scale-range", sw_ilm_range, "lo:hi:step (default from config)");
  sweep->add_option("--out", sw_out, "Output directory (default: <outputs>/sweep-<variant>)");
  sweep->callback([&] {
    action = [&] {
      Job job("sweep", &common, ResolveConfig(common));
      sw.Resolve(job.config);
      const FusionConfig base = sw.Fusion(job.config);
      if (!sw_lm_range.empty()) job.config.lm_scale_range = ParseRange(sw_lm_range);
      if (!sw_ilm_range.empty()) job.config.ilm_scale_range = ParseRange(sw_ilm_range);
      std::vector<double> xs = job.config.lm_scale_range.Values();
      std::vector<double> ys = job.config.ilm_scale_range.Values();
      if (sw.lm.empty()) xs = {0.0};
      if (base.ilm == IlmKind::kNone) ys = {0.0};
      if (sw_out.empty()) sw_out = job.config.paths.outputs + "/sweep-" + sw.ilm_variant;
      job.arguments = sw.Arguments();
      job.arguments["lm_scale_range"] = xs;
      job.arguments["ilm_scale_range"] = ys;
      job.arguments["out"] = sw_out;
      job.inputs = sw.Inputs(base.ilm);
      job.outputs = {sw_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(sw.data + "/" + sw.domain);
        LoadedModels models;
        LoadModels(sw, base.ilm, corpus.vocab, models);
        const auto &utts = Split(corpus, sw.split);
        std::vector<FusionConfig> cells;
        for (double x : xs) {
          for (double y : ys) {
            FusionConfig f = base;
            f.lm_scale = x;
            f.ilm_scale = y;
            cells.push_back(f);
          }
        }
        const SweepResult result = MakeSweepResult(
            xs, ys, ScoreCorpus(models.resources, utts, cells, job.config.topology, job.config.workers));
        fs::create_directories(sw_out);
        const Table table = SweepTable(result, "lm-scale", "ilm-scale");
        WriteText(sw_out + "/sweep.txt", RenderText(table));
        WriteText(sw_out + "/sweep.csv", RenderCsv(table));
        const FusionConfig &tuned = cells[result.best];
        const ErrorCounts &c = result.optimum().counts;
        const json best = {{"tuned", ToJson(tuned)},
                           {"wer", c.wer()},
                           {"sub", c.sub},
                           {"del", c.del},
                           {"ins", c.ins},
                           {"ref_len", c.ref_len}};
        WriteText(sw_out + "/best.json", best.dump(2) + "\n");
        Log(common, "sweep: optimum lm-scale " + FormatFixed(tuned.lm_scale, 4) + ", ilm-scale " +
                        FormatFixed(tuned.ilm_scale, 4) + ", WER " + FormatFixed(100.0 * c.wer(), 2) +
                        "%, wrote " + sw_out);
        return best;
      });
    };
  });

  // evaluate
  std::string ev_data, ev_domain = "target", ev_split = "test", ev_nbest, ev_out;
  auto *evaluate = app.add_subcommand("evaluate", "Score the first-best entries of an n-best file");
  evaluate->add_option("--data", ev_data, "Data directory (default: paths.data)");
  evaluate->add_option("--domain", ev_domain, "source or target")->check(CLI::IsMember({"source", "target"}));
  evaluate->add_option("--split", ev_split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  evaluate->add_option("--nbest", ev_nbest, "N-best file written by decode")->required();
  evaluate->add_option("--out", ev_out, "Report directory (default: <nbest>.eval)");
  evaluate->callback([&] {
    action = [&] {
      Job job("evaluate", &common, ResolveConfig(common));
      if (ev_data.empty()) ev_data = job.config.paths.data;
      if (ev_out.empty()) ev_out = ev_nbest + ".eval";
      job.arguments = {{"data", ev_data}, {"domain", ev_domain}, {"split", ev_split},
                       {"nbest", ev_nbest}, {"out", ev_out}};
      job.inputs = {ev_data + "/" + ev_domain, ev_nbest};
      job.outputs = {ev_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(ev_data + "/" + ev_domain);
        std::ifstream is(ev_nbest);
        const auto entries = ReadNbest(is, corpus.vocab, ev_nbest);
        std::map<std::string, std::vector<int>> hyps;
        for (const NbestEntry &e : entries) {
          if (e.rank == 1) hyps[e.id] = e.labels;
        }
        const ErrorCounts c = CorpusWer(Refs(Split(corpus, ev_split)), hyps);
        Table t;
        t.header = {"set", "WER", "Sub", "Del", "Ins", "errors", "ref_len"};
        t.rows.push_back({ev_domain + "/" + ev_split, FormatFixed(100.0 * c.wer(), 2),
                          FormatFixed(c.sub_rate(), 2), FormatFixed(c.del_rate(), 2),
                          FormatFixed(c.ins_rate(), 2), std::to_string(c.errors()),
                          std::to_string(c.ref_len)});
        fs::create_directories(ev_out);
        WriteText(ev_out + "/wer.txt", RenderText(t));
        WriteText(ev_out + "/wer.csv", RenderCsv(t));
        if (!common.quiet) std::cout << RenderText(t);
        return json{{"wer", c.wer()}, {"sub", c.sub}, {"del", c.del}, {"ins", c.ins},
                    {"ref_len", c.ref_len}};
      });
    };
  });

  // analyze
  DecodeFlags an;
  an.split = "dev";
  std::string an_out;
  auto *analyze = app.add_subcommand(
      "analyze", "Length-reward / renorm-eps / ILM-correction analysis table with Sub/Del/Ins");
  an.Add(analyze, false);
  analyze->add_option("--split", an.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  analyze->add_option("--out", an_out, "Output directory (default: <outputs>/analysis)");
  analyze->callback([&] {
    action = [&] {
      Job job("analyze", &common, ResolveConfig(common));
      an.Resolve(job.config);
      if (an.lm.empty()) an.lm = job.config.paths.models + "/lm.json";
      if (an_out.empty()) an_out = job.config.paths.outputs + "/analysis";
      job.arguments = an.Arguments();
      job.arguments["out"] = an_out;
      job.inputs = an.Inputs(IlmKind::kZero);
      job.outputs = {an_out};
      return Execute(job, [&] {
        const Corpus corpus = LoadCorpus(an.data + "/" + an.domain);
        LoadedModels models;
        LoadModels(an, IlmKind::kZero, corpus.vocab, models);
        const auto rows = AnalysisReport(
            StandardAnalysis(job.config),
            CorpusEvaluator(models.resources, Split(corpus, an.split), job.config.topology,
                            job.config.workers));
        const Table table = AnalysisTable(rows);
        fs::create_directories(an_out);
        WriteText(an_out + "/analysis.txt", RenderText(table));
        WriteText(an_out + "/analysis.csv", RenderCsv(table));
        if (!common.quiet) std::cout << RenderText(table);
        json out = json::array();
        for (const AnalysisRow &r : rows) {
          out.push_back({{"name", r.name}, {"tuned", ToJson(r.tuned)}, {"wer", r.counts.wer()},
                         {"sub", r.counts.sub}, {"del", r.counts.del}, {"ins", r.counts.ins},
                         {"ref_len", r.counts.ref_len}});
        }
        return json{{"rows", out}};
      });
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }
  try {
    return action();
  } catch (const MissingInput &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissingInput;
  } catch (const DimensionError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIncompatible;
  } catch (const FormatError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMalformedInput;
  } catch (const VersionError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMalformedInput;
  } catch (const ArgumentError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidArgument;
  } catch (const InfeasibleError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidArgument;
  } catch (const IoError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const NumericError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace

int main(int argc, char **argv) { return Run(argc, argv); }
