// src/corpus.cc

#include "rnnt/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rnnt/error.h"
#include "rnnt/nn.h"

namespace rnnt {
namespace {

constexpr const char *kCorpusMagic = "rnnt-ilm-corpus";
constexpr int kCorpusVersion = 1;

size_t SampleIndex(std::span<const double> probs, std::mt19937_64 &rng) {
  const double u = UniformDouble(rng, 0.0, 1.0);
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the total; take the last label with mass.
  for (size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0) return i;
  }
  return probs.size() - 1;
}

size_t SampleUniform(size_t lo, size_t hi, std::mt19937_64 &rng) {
  const double u = UniformDouble(rng, 0.0, 1.0);
  return lo + std::min(hi - lo, static_cast<size_t>(u * static_cast<double>(hi - lo + 1)));
}

void CheckDistribution(const std::vector<double> &p, size_t n,
                       const std::string &what) {
  if (p.size() != n) {
    throw ArgumentError(what + " has " + std::to_string(p.size()) +
                        " entries, expected " + std::to_string(n));
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0)) throw ArgumentError(what + " has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ArgumentError(what + " sums to " + std::to_string(total));
  }
}

std::string Format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void DomainSpec::Validate() const {
  const size_t V = vocab.size();
  if (V == 0) throw ArgumentError("domain: empty vocabulary");
  if (order != 1 && order != 2) throw ArgumentError("domain: order must be 1 or 2");
  const size_t rows = order == 1 ? V : V * V;
  if (transitions.size() != rows) {
    throw ArgumentError("domain: expected " + std::to_string(rows) +
                        " transition rows");
  }
  for (size_t r = 0; r < rows; ++r) {
    CheckDistribution(transitions[r], V, "domain: transition row " + std::to_string(r));
  }
  CheckDistribution(initial, V, "domain: initial distribution");
  if (min_length < 1 || max_length < min_length) {
    throw ArgumentError("domain: need 1 <= min_length <= max_length");
  }
  if (min_duration < 1 || max_duration < min_duration) {
    throw ArgumentError("domain: need 1 <= min_duration <= max_duration");
  }
  if (prototypes.size() != V) throw ArgumentError("domain: need one prototype per label");
  const size_t d = feature_dim();
  if (d == 0) throw ArgumentError("domain: empty prototypes");
  for (size_t i = 0; i < V; ++i) {
    if (prototypes[i].size() != d) throw ArgumentError("domain: ragged prototypes");
    for (size_t j = 0; j < i; ++j) {
      if (prototypes[i] == prototypes[j]) {
        throw ArgumentError("domain: prototypes " + std::to_string(j) + " and " +
                            std::to_string(i) + " coincide");
      }
    }
  }
  if (!(noise >= 0)) throw ArgumentError("domain: noise must be >= 0");
}

std::vector<double> StationaryDistribution(
    const std::vector<std::vector<double>> &transitions) {
  const size_t V = transitions.size();
  std::vector<double> p(V, 1.0 / static_cast<double>(V)), next(V);
  for (int iter = 0; iter < 100000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (size_t i = 0; i < V; ++i) {
      for (size_t j = 0; j < V; ++j) next[j] += p[i] * transitions[i][j];
    }
    // Averaging with the previous iterate damps periodic chains.
    double diff = 0.0;
    for (size_t j = 0; j < V; ++j) {
      next[j] = 0.5 * (next[j] + p[j]);
      diff = std::max(diff, std::abs(next[j] - p[j]));
    }
    p.swap(next);
    if (diff < 1e-15) break;
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double &v : p) v /= total;
  return p;
}

std::vector<std::vector<double>> RandomChain(size_t vocab_size,
                                             const ChainShape &shape,
                                             uint64_t seed) {
  if (vocab_size < 2) throw ArgumentError("chain: need at least 2 labels");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> rows(vocab_size,
                                        std::vector<double>(vocab_size, 0.0));
  for (size_t i = 0; i < vocab_size; ++i) {
    std::vector<size_t> others;
    for (size_t j = 0; j < vocab_size; ++j) {
      if (j != i) others.push_back(j);
    }
    std::shuffle(others.begin(), others.end(), rng);
    const size_t k = std::min(shape.successors, others.size());
    const double floor_mass = k == others.size() ? 0.0 : shape.floor_mass;
    std::vector<double> w(k);
    double total = 0.0;
    for (double &x : w) {
      x = -std::log(1.0 - UniformDouble(rng, 0.0, 1.0));
      total += x;
    }
    for (size_t m = 0; m < k; ++m) {
      rows[i][others[m]] = (1.0 - floor_mass) * w[m] / total;
    }
    for (size_t m = k; m < others.size(); ++m) {
      rows[i][others[m]] = floor_mass / static_cast<double>(others.size() - k);
    }
  }
  return rows;
}

std::vector<std::vector<double>> RandomPrototypes(size_t vocab_size, size_t dim,
                                                  uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(vocab_size, std::vector<double>(dim));
  for (auto &row : out) {
    for (double &v : row) v = normal(rng);
  }
  return out;
}

DomainSpec MakeDomain(const Vocabulary &vocab,
                      std::vector<std::vector<double>> prototypes,
                      std::vector<std::vector<double>> transitions,
                      double noise) {
  DomainSpec spec;
  spec.vocab = vocab;
  spec.order = 1;
  spec.initial = StationaryDistribution(transitions);
  spec.transitions = std::move(transitions);
  spec.prototypes = std::move(prototypes);
  spec.noise = noise;
  spec.Validate();
  return spec;
}

std::vector<int> SampleSentence(const DomainSpec &spec, std::mt19937_64 &rng) {
  const size_t V = spec.vocab.size();
  const size_t length = SampleUniform(spec.min_length, spec.max_length, rng);
  std::vector<int> out;
  out.push_back(static_cast<int>(SampleIndex(spec.initial, rng)));
  while (out.size() < length) {
    const size_t prev1 = static_cast<size_t>(out.back());
    size_t row = prev1;
    if (spec.order == 2) {
      const size_t prev2 = out.size() >= 2 ? static_cast<size_t>(out[out.size() - 2]) : prev1;
      row = prev2 * V + prev1;
    }
    out.push_back(static_cast<int>(SampleIndex(spec.transitions[row], rng)));
  }
  return out;
}

Utterance SampleUtterance(const DomainSpec &spec, const std::string &id,
                          std::mt19937_64 &rng) {
  Utterance u;
  u.id = id;
  u.labels = SampleSentence(spec, rng);
  std::vector<size_t> durations;
  size_t frames = 0;
  for (size_t s = 0; s < u.labels.size(); ++s) {
    durations.push_back(SampleUniform(spec.min_duration, spec.max_duration, rng));
    frames += durations.back();
  }
  const size_t d = spec.feature_dim();
  u.features = Array(frames, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  size_t t = 0;
  for (size_t s = 0; s < u.labels.size(); ++s) {
    const auto &proto = spec.prototypes[u.labels[s]];
    for (size_t k = 0; k < durations[s]; ++k, ++t) {
      for (size_t j = 0; j < d; ++j) {
        u.features(t, j) =
            spec.noise == 0.0 ? proto[j] : proto[j] + spec.noise * normal(rng);
      }
    }
  }
  return u;
}

Corpus GenCorpus(const DomainSpec &spec, const SplitSizes &sizes,
                 uint64_t seed) {
  spec.Validate();
  if (sizes.train == 0 || sizes.dev == 0 || sizes.test == 0) {
    throw ArgumentError("corpus: every split needs at least one utterance");
  }
  std::mt19937_64 rng(seed);
  Corpus c;
  c.vocab = spec.vocab;
  c.feature_dim = spec.feature_dim();
  auto fill = [&](std::vector<Utterance> &split, const char *name, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s-%05zu", name, i);
      split.push_back(SampleUtterance(spec, id, rng));
    }
  };
  fill(c.train, "train", sizes.train);
  fill(c.dev, "dev", sizes.dev);
  fill(c.test, "test", sizes.test);
  return c;
}

std::vector<std::vector<int>> GenTextCorpus(const DomainSpec &spec,
                                            size_t sentences, uint64_t seed) {
  spec.Validate();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> out;
  out.reserve(sentences);
  for (size_t i = 0; i < sentences; ++i) out.push_back(SampleSentence(spec, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::ofstream OpenOut(const std::string &path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream OpenIn(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return is;
}

std::vector<std::string> Tokens(const std::string &line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double ParseDouble(const std::string &tok, const std::string &file,
                   size_t line) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception &) {
    throw ParseError(file, line, "bad number '" + tok + "'");
  }
  if (used != tok.size() || !std::isfinite(v)) {
    throw ParseError(file, line, "bad number '" + tok + "'");
  }
  return v;
}

size_t ParseCount(const std::string &tok, const std::string &file,
                  size_t line) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(file, line, "bad count '" + tok + "'");
  }
  return std::stoul(tok);
}

std::vector<int> ParseLabels(const Vocabulary &vocab,
                             std::span<const std::string> toks,
                             const std::string &file, size_t line) {
  std::vector<int> out;
  for (const auto &t : toks) {
    if (!vocab.Contains(t)) throw ParseError(file, line, "unknown label '" + t + "'");
    out.push_back(vocab.Id(t));
  }
  return out;
}

void SaveSplit(const std::string &dir, const std::string &name,
               const std::vector<Utterance> &split, const Vocabulary &vocab) {
  std::ofstream trans = OpenOut(dir + "/" + name + ".trans");
  std::ofstream feats = OpenOut(dir + "/" + name + ".feats");
  for (const Utterance &u : split) {
    if (u.labels.empty()) {
      throw ArgumentError("corpus: utterance '" + u.id + "' has no labels");
    }
    trans << u.id << ' ' << vocab.Render(u.labels) << '\n';
    feats << u.id << ' ' << u.features.rows() << '\n';
    for (size_t t = 0; t < u.features.rows(); ++t) {
      for (size_t j = 0; j < u.features.cols(); ++j) {
        feats << (j ? " " : "") << Format17(u.features(t, j));
      }
      feats << '\n';
    }
  }
  if (!trans || !feats) throw IoError("write to corpus '" + dir + "' failed");
}

std::vector<Utterance> LoadSplit(const std::string &dir, const std::string &name,
                                 size_t count, const Vocabulary &vocab,
                                 size_t dim) {
  const std::string tpath = dir + "/" + name + ".trans";
  const std::string fpath = dir + "/" + name + ".feats";
  std::ifstream trans = OpenIn(tpath);
  std::ifstream feats = OpenIn(fpath);
  std::vector<Utterance> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(trans, line)) {
    ++lineno;
    const auto toks = Tokens(line);
    if (toks.empty()) throw ParseError(tpath, lineno, "empty line");
    if (toks.size() < 2) {
      throw ParseError(tpath, lineno, "empty transcription for '" + toks[0] + "'");
    }
    Utterance u;
    u.id = toks[0];
    u.labels = ParseLabels(vocab, std::span(toks).subspan(1), tpath, lineno);
    out.push_back(std::move(u));
  }
  if (out.size() != count) {
    throw ParseError(tpath, lineno + 1,
                     "expected " + std::to_string(count) + " utterances, found " +
                         std::to_string(out.size()));
  }
  lineno = 0;
  for (Utterance &u : out) {
    if (!std::getline(feats, line)) {
      throw ParseError(fpath, lineno + 1, "truncated: missing header for '" + u.id + "'");
    }
    ++lineno;
    const auto head = Tokens(line);
    if (head.size() != 2 || head[0] != u.id) {
      throw ParseError(fpath, lineno, "expected header '" + u.id + " <frames>'");
    }
    const size_t frames = ParseCount(head[1], fpath, lineno);
    if (frames == 0) throw ParseError(fpath, lineno, "utterance without frames");
    u.features = Array(frames, dim);
    for (size_t t = 0; t < frames; ++t) {
      if (!std::getline(feats, line)) {
        throw ParseError(fpath, lineno + 1, "truncated: '" + u.id + "' ends after " +
                                                std::to_string(t) + " of " +
                                                std::to_string(frames) + " frames");
      }
      ++lineno;
      const auto vals = Tokens(line);
      if (vals.size() != dim) {
        throw ParseError(fpath, lineno, "expected " + std::to_string(dim) +
                                            " values, found " +
                                            std::to_string(vals.size()));
      }
      for (size_t j = 0; j < dim; ++j) u.features(t, j) = ParseDouble(vals[j], fpath, lineno);
    }
  }
  if (std::getline(feats, line)) {
    throw ParseError(fpath, lineno + 1, "unexpected trailing content");
  }
  return out;
}

}  // namespace

void SaveCorpus(const std::string &dir, const Corpus &corpus) {
  std::filesystem::create_directories(dir);
  std::ofstream m = OpenOut(dir + "/manifest.txt");
  m << "format " << kCorpusMagic << ' ' << kCorpusVersion << '\n';
  m << "vocab";
  for (const auto &l : corpus.vocab.labels()) m << ' ' << l;
  m << '\n' << "feature_dim " << corpus.feature_dim << '\n';
  m << "split train " << corpus.train.size() << '\n';
  m << "split dev " << corpus.dev.size() << '\n';
  m << "split test " << corpus.test.size() << '\n';
  if (!m) throw IoError("write to '" + dir + "/manifest.txt' failed");
  SaveSplit(dir, "train", corpus.train, corpus.vocab);
  SaveSplit(dir, "dev", corpus.dev, corpus.vocab);
  SaveSplit(dir, "test", corpus.test, corpus.vocab);
}

Corpus LoadCorpus(const std::string &dir) {
  const std::string mpath = dir + "/manifest.txt";
  std::ifstream m = OpenIn(mpath);
  Corpus c;
  std::map<std::string, size_t> counts;
  bool have_format = false, have_vocab = false, have_dim = false;
  std::string line;
  size_t lineno = 0;
  while (std::getline(m, line)) {
    ++lineno;
    const auto toks = Tokens(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() != 3 || toks[1] != kCorpusMagic) {
        throw ParseError(mpath, lineno, "not a corpus manifest");
      }
      if (toks[2] != std::to_string(kCorpusVersion)) {
        throw ParseError(mpath, lineno, "unsupported corpus version " + toks[2]);
      }
      have_format = true;
    } else if (toks[0] == "vocab") {
      try {
        c.vocab = Vocabulary({toks.begin() + 1, toks.end()});
      } catch (const ArgumentError &e) {
        throw ParseError(mpath, lineno, e.what());
      }
      have_vocab = true;
    } else if (toks[0] == "feature_dim" && toks.size() == 2) {
      c.feature_dim = ParseCount(toks[1], mpath, lineno);
      have_dim = true;
    } else if (toks[0] == "split" && toks.size() == 3) {
      counts[toks[1]] = ParseCount(toks[2], mpath, lineno);
    } else {
      throw ParseError(mpath, lineno, "unknown manifest entry '" + toks[0] + "'");
    }
  }
  if (!have_format || !have_vocab || !have_dim) {
    throw ParseError(mpath, lineno + 1, "truncated manifest");
  }
  for (const char *name : {"train", "dev", "test"}) {
    if (!counts.count(name)) {
      throw ParseError(mpath, lineno + 1, std::string("missing split ") + name);
    }
  }
  c.train = LoadSplit(dir, "train", counts["train"], c.vocab, c.feature_dim);
  c.dev = LoadSplit(dir, "dev", counts["dev"], c.vocab, c.feature_dim);
  c.test = LoadSplit(dir, "test", counts["test"], c.vocab, c.feature_dim);
  return c;
}

void SaveText(const std::string &path, const Vocabulary &vocab,
              const std::vector<std::vector<int>> &sentences) {
  std::ofstream os = OpenOut(path);
  for (const auto &s : sentences) {
    if (s.empty()) throw ArgumentError("text corpus: empty sentence");
    os << vocab.Render(s) << '\n';
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::vector<std::vector<int>> LoadText(const std::string &path,
                                       const Vocabulary &vocab) {
  std::ifstream is = OpenIn(path);
  std::vector<std::vector<int>> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto toks = Tokens(line);
    if (toks.empty()) throw ParseError(path, lineno, "empty sentence");
    out.push_back(ParseLabels(vocab, toks, path, lineno));
  }
  return out;
}

}  // namespace rnnt
