// include/rnnt/model_io.h
//
// Model files are JSON documents:
//   {"format": "rnnt-ilm-model", "format_version": 1, "kind": ..., "seed": ...,
//    "vocab": [...], "dims": {...}, "params": [{"name", "shape", "data"}]}
// n-gram LMs carry "ngram": {"order", "delta", "counts"} instead of params.
// Doubles are written in shortest round-trip form (at most 17 significant
// digits), so save followed by load is bit-exact.

#ifndef RNNT_MODEL_IO_H_
#define RNNT_MODEL_IO_H_

#include <memory>
#include <optional>
#include <string>

#include "rnnt/model.h"

namespace rnnt {

inline constexpr const char *kModelFormat = "rnnt-ilm-model";
inline constexpr int kModelFormatVersion = 1;
inline constexpr const char *kRnntKind = "rnnt";

void SaveModel(const std::string &path, const RnntModel &model);
void SaveModel(const std::string &path, const RecurrentLm &lm);
void SaveModel(const std::string &path, const NgramLm &lm);
void SaveModel(const std::string &path, const MiniIlmNet &net);

// Each loader throws FormatError for a bad magic, wrong kind or malformed or
// truncated content, VersionError for an unknown format_version, and
// DimensionError when shapes disagree with the stored dims or with
// `expected_vocab_size`.
RnntModel LoadRnntModel(const std::string &path,
                        std::optional<size_t> expected_vocab_size = {});
RecurrentLm LoadDensityRatioLm(const std::string &path,
                               std::optional<size_t> expected_vocab_size = {});
MiniIlmNet LoadMiniIlm(const std::string &path,
                       std::optional<size_t> expected_vocab_size = {});
// External LM of either recurrent or n-gram kind.
std::unique_ptr<LanguageModel> LoadLanguageModel(
    const std::string &path, std::optional<size_t> expected_vocab_size = {});

std::string PeekModelKind(const std::string &path);

}  // namespace rnnt

#endif  // RNNT_MODEL_IO_H_
