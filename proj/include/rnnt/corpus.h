// include/rnnt/corpus.h
//
// Synthetic transduction tasks. A domain is a Markov chain over a shared
// vocabulary plus per-label acoustic prototypes; an utterance repeats each
// label's prototype for a sampled duration and adds Gaussian noise.

#ifndef RNNT_CORPUS_H_
#define RNNT_CORPUS_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rnnt/utterance.h"
#include "rnnt/vocab.h"

namespace rnnt {

struct DomainSpec {
  Vocabulary vocab;
  // 1: rows indexed by the previous label. 2: rows indexed by
  // prev2 * |V| + prev1; the second label of a sentence uses the row
  // (a_1, a_1).
  size_t order = 1;
  std::vector<std::vector<double>> transitions;
  std::vector<double> initial;  // distribution of the first label
  size_t min_length = 3;        // sentence length, uniform and inclusive
  size_t max_length = 8;
  std::vector<std::vector<double>> prototypes;  // |V| x d
  size_t min_duration = 1;  // frames per label, uniform and inclusive
  size_t max_duration = 3;
  double noise = 0.0;  // sigma

  size_t feature_dim() const { return prototypes.empty() ? 0 : prototypes[0].size(); }
  // Throws ArgumentError naming the violated constraint.
  void Validate() const;
};

// Stationary distribution of an order-1 chain (power iteration to 1e-15).
std::vector<double> StationaryDistribution(
    const std::vector<std::vector<double>> &transitions);

struct ChainShape {
  size_t successors = 3;     // labels receiving most of each row's mass
  double floor_mass = 0.05;  // spread evenly over the other non-self labels
};

// Random order-1 chain without self transitions; each row puts
// 1 - floor_mass on `successors` randomly chosen labels with random weights.
std::vector<std::vector<double>> RandomChain(size_t vocab_size,
                                             const ChainShape &shape,
                                             uint64_t seed);
// |V| x d prototypes with independent N(0, 1) entries.
std::vector<std::vector<double>> RandomPrototypes(size_t vocab_size, size_t dim,
                                                  uint64_t seed);

// Order-1 domain whose first-label distribution is the chain's stationary
// distribution.
DomainSpec MakeDomain(const Vocabulary &vocab,
                      std::vector<std::vector<double>> prototypes,
                      std::vector<std::vector<double>> transitions,
                      double noise);

struct SplitSizes {
  size_t train = 2000;
  size_t dev = 200;
  size_t test = 200;
};

struct Corpus {
  Vocabulary vocab;
  size_t feature_dim = 0;
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> test;
};

std::vector<int> SampleSentence(const DomainSpec &spec, std::mt19937_64 &rng);
Utterance SampleUtterance(const DomainSpec &spec, const std::string &id,
                          std::mt19937_64 &rng);

// Ids are "<split>-<index>" with the index zero-padded to five digits, so
// splits are disjoint and sort in generation order.
Corpus GenCorpus(const DomainSpec &spec, const SplitSizes &sizes,
                 uint64_t seed);
std::vector<std::vector<int>> GenTextCorpus(const DomainSpec &spec,
                                            size_t sentences, uint64_t seed);

// Directory layout: manifest.txt, <split>.trans, <split>.feats.
//   manifest.txt  "format rnnt-ilm-corpus 1", "vocab <labels...>",
//                 "feature_dim <d>", "split <name> <count>"
//   <split>.trans "<id> <label> <label> ..."
//   <split>.feats "<id> <T>" followed by T lines of d values
// Values are written with 17 significant digits, so a round trip is exact.
void SaveCorpus(const std::string &dir, const Corpus &corpus);
Corpus LoadCorpus(const std::string &dir);

// One sentence of space-separated labels per line.
void SaveText(const std::string &path, const Vocabulary &vocab,
              const std::vector<std::vector<int>> &sentences);
std::vector<std::vector<int>> LoadText(const std::string &path,
                                       const Vocabulary &vocab);

}  // namespace rnnt

#endif  // RNNT_CORPUS_H_
