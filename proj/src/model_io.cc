// src/model_io.cc

#include "rnnt/model_io.h"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rnnt/error.h"

namespace rnnt {
namespace {

using nlohmann::json;

json ParamsToJson(const std::vector<const Parameter *> &params) {
  json out = json::array();
  for (const Parameter *p : params) {
    out.push_back({{"name", p->name},
                   {"shape", {p->value.rows(), p->value.cols()}},
                   {"data", p->value.values()}});
  }
  return out;
}

json Header(const std::string &kind, uint64_t seed, const Vocabulary &vocab) {
  return {{"format", kModelFormat},
          {"format_version", kModelFormatVersion},
          {"kind", kind},
          {"seed", seed},
          {"vocab", vocab.labels()}};
}

void WriteJson(const std::string &path, const json &doc) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << doc.dump() << '\n';
  if (!os) throw IoError("write to '" + path + "' failed");
}

json ReadJson(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error &e) {
    throw FormatError(path + ": malformed or truncated model file (" +
                      e.what() + ")");
  }
  if (!doc.is_object() || !doc.contains("format") ||
      doc["format"] != kModelFormat) {
    throw FormatError(path + ": not a model file (bad format magic)");
  }
  if (!doc.contains("format_version") ||
      doc["format_version"] != kModelFormatVersion) {
    throw VersionError(path + ": unsupported format_version " +
                       (doc.contains("format_version")
                            ? doc["format_version"].dump()
                            : std::string("<missing>")));
  }
  return doc;
}

template <typename T>
T Field(const json &obj, const char *key, const std::string &path) {
  if (!obj.contains(key)) {
    throw FormatError(path + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception &e) {
    throw FormatError(path + ": bad field '" + key + "' (" + e.what() + ")");
  }
}

void ExpectKind(const json &doc, const std::string &kind,
                const std::string &path) {
  const auto actual = Field<std::string>(doc, "kind", path);
  if (actual != kind) {
    throw FormatError(path + ": expected a '" + kind + "' model, found '" +
                      actual + "'");
  }
}

Vocabulary ReadVocab(const json &doc, const std::string &path,
                     size_t dims_vocab_size,
                     std::optional<size_t> expected_vocab_size) {
  Vocabulary vocab(Field<std::vector<std::string>>(doc, "vocab", path));
  if (vocab.size() != dims_vocab_size) {
    throw DimensionError(path + ": dims.vocab_size " +
                         std::to_string(dims_vocab_size) + " but " +
                         std::to_string(vocab.size()) + " vocabulary entries");
  }
  if (expected_vocab_size && *expected_vocab_size != vocab.size()) {
    throw DimensionError(path + ": vocabulary size " +
                         std::to_string(vocab.size()) + " but expected " +
                         std::to_string(*expected_vocab_size));
  }
  return vocab;
}

void ReadParams(const json &doc, const std::string &path,
                const std::vector<Parameter *> &params) {
  const auto &arr = doc.contains("params") ? doc["params"] : json();
  if (!arr.is_array() || arr.size() != params.size()) {
    throw DimensionError(path + ": expected " + std::to_string(params.size()) +
                         " parameter arrays");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter &p = *params[i];
    const json &item = arr[i];
    const auto name = Field<std::string>(item, "name", path);
    if (name != p.name) {
      throw FormatError(path + ": parameter #" + std::to_string(i) + " is '" +
                        name + "', expected '" + p.name + "'");
    }
    const auto shape = Field<std::vector<size_t>>(item, "shape", path);
    auto data = Field<std::vector<double>>(item, "data", path);
    if (shape.size() != 2 || shape[0] != p.value.rows() ||
        shape[1] != p.value.cols() || data.size() != shape[0] * shape[1]) {
      throw DimensionError(path + ": parameter '" + name + "' has shape " +
                           item["shape"].dump() + " with " +
                           std::to_string(data.size()) + " values, expected " +
                           p.value.ShapeString());
    }
    p.value = Array(shape[0], shape[1], std::move(data));
    p.ZeroGrad();
  }
}

}  // namespace

void SaveModel(const std::string &path, const RnntModel &model) {
  const RnntConfig &c = model.config();
  json doc = Header(kRnntKind, model.seed(), model.vocab());
  doc["dims"] = {{"vocab_size", c.vocab_size},
                 {"feature_dim", c.feature_dim},
                 {"encoder_layers", c.encoder_layers},
                 {"encoder_units", c.encoder_units},
                 {"subsampling", c.subsampling},
                 {"prediction_layers", c.prediction_layers},
                 {"prediction_units", c.prediction_units},
                 {"embedding_dim", c.embedding_dim},
                 {"joint_units", c.joint_units},
                 {"joint_tanh", c.joint_tanh}};
  doc["params"] = ParamsToJson(model.Params());
  WriteJson(path, doc);
}

void SaveModel(const std::string &path, const RecurrentLm &lm) {
  const RecurrentLmConfig &c = lm.config();
  json doc = Header(lm.kind(), lm.seed(), lm.vocab());
  doc["dims"] = {{"vocab_size", c.vocab_size},
                 {"embedding_dim", c.embedding_dim},
                 {"hidden_units", c.hidden_units},
                 {"layers", c.layers}};
  doc["params"] = ParamsToJson(lm.Params());
  WriteJson(path, doc);
}

void SaveModel(const std::string &path, const NgramLm &lm) {
  json doc = Header(lm.kind(), 0, lm.vocab());
  doc["dims"] = {{"vocab_size", lm.vocab_size()}};
  json counts = json::array();
  for (const auto &[context, row] : lm.counts()) {
    counts.push_back({{"context", context}, {"counts", row}});
  }
  doc["ngram"] = {{"order", lm.order()}, {"delta", lm.delta()}, {"counts", counts}};
  WriteJson(path, doc);
}

void SaveModel(const std::string &path, const MiniIlmNet &net) {
  const MiniIlmConfig &c = net.config();
  json doc = Header(MiniIlmNet::kKind, net.seed(), net.vocab());
  doc["dims"] = {{"vocab_size", c.vocab_size},
                 {"embedding_dim", c.embedding_dim},
                 {"hidden_units", c.hidden_units},
                 {"output_dim", c.output_dim}};
  doc["params"] = ParamsToJson(net.Params());
  WriteJson(path, doc);
}

std::string PeekModelKind(const std::string &path) {
  return Field<std::string>(ReadJson(path), "kind", path);
}

RnntModel LoadRnntModel(const std::string &path,
                        std::optional<size_t> expected_vocab_size) {
  json doc = ReadJson(path);
  ExpectKind(doc, kRnntKind, path);
  const json dims = Field<json>(doc, "dims", path);
  RnntConfig c;
  c.vocab_size = Field<size_t>(dims, "vocab_size", path);
  c.feature_dim = Field<size_t>(dims, "feature_dim", path);
  c.encoder_layers = Field<size_t>(dims, "encoder_layers", path);
  c.encoder_units = Field<size_t>(dims, "encoder_units", path);
  c.subsampling = Field<size_t>(dims, "subsampling", path);
  c.prediction_layers = Field<size_t>(dims, "prediction_layers", path);
  c.prediction_units = Field<size_t>(dims, "prediction_units", path);
  c.embedding_dim = Field<size_t>(dims, "embedding_dim", path);
  c.joint_units = Field<size_t>(dims, "joint_units", path);
  c.joint_tanh = Field<bool>(dims, "joint_tanh", path);
  RnntModel model(c, ReadVocab(doc, path, c.vocab_size, expected_vocab_size));
  model.set_seed(Field<uint64_t>(doc, "seed", path));
  ReadParams(doc, path, model.Params());
  return model;
}

namespace {

RecurrentLm LoadRecurrent(const json &doc, const std::string &path,
                          const std::string &kind,
                          std::optional<size_t> expected_vocab_size) {
  const json dims = Field<json>(doc, "dims", path);
  RecurrentLmConfig c;
  c.vocab_size = Field<size_t>(dims, "vocab_size", path);
  c.embedding_dim = Field<size_t>(dims, "embedding_dim", path);
  c.hidden_units = Field<size_t>(dims, "hidden_units", path);
  c.layers = Field<size_t>(dims, "layers", path);
  RecurrentLm lm(c, ReadVocab(doc, path, c.vocab_size, expected_vocab_size),
                 kind);
  lm.set_seed(Field<uint64_t>(doc, "seed", path));
  ReadParams(doc, path, lm.Params());
  return lm;
}

}  // namespace

RecurrentLm LoadDensityRatioLm(const std::string &path,
                               std::optional<size_t> expected_vocab_size) {
  json doc = ReadJson(path);
  ExpectKind(doc, RecurrentLm::kDensityRatioKind, path);
  return LoadRecurrent(doc, path, RecurrentLm::kDensityRatioKind,
                       expected_vocab_size);
}

MiniIlmNet LoadMiniIlm(const std::string &path,
                       std::optional<size_t> expected_vocab_size) {
  json doc = ReadJson(path);
  ExpectKind(doc, MiniIlmNet::kKind, path);
  const json dims = Field<json>(doc, "dims", path);
  MiniIlmConfig c;
  c.vocab_size = Field<size_t>(dims, "vocab_size", path);
  c.embedding_dim = Field<size_t>(dims, "embedding_dim", path);
  c.hidden_units = Field<size_t>(dims, "hidden_units", path);
  c.output_dim = Field<size_t>(dims, "output_dim", path);
  MiniIlmNet net(c, ReadVocab(doc, path, c.vocab_size, expected_vocab_size));
  net.set_seed(Field<uint64_t>(doc, "seed", path));
  ReadParams(doc, path, net.Params());
  return net;
}

std::unique_ptr<LanguageModel> LoadLanguageModel(
    const std::string &path, std::optional<size_t> expected_vocab_size) {
  json doc = ReadJson(path);
  const auto kind = Field<std::string>(doc, "kind", path);
  if (kind == RecurrentLm::kExternalKind) {
    return std::make_unique<RecurrentLm>(
        LoadRecurrent(doc, path, kind, expected_vocab_size));
  }
  if (kind != NgramLm::kKind) {
    throw FormatError(path + ": '" + kind + "' is not an external LM");
  }
  const json dims = Field<json>(doc, "dims", path);
  const size_t vocab_size = Field<size_t>(dims, "vocab_size", path);
  Vocabulary vocab = ReadVocab(doc, path, vocab_size, expected_vocab_size);
  const json ng = Field<json>(doc, "ngram", path);
  auto lm = std::make_unique<NgramLm>(std::move(vocab),
                                      Field<size_t>(ng, "order", path),
                                      Field<double>(ng, "delta", path));
  for (const json &entry : Field<json>(ng, "counts", path)) {
    const auto context = Field<std::vector<int>>(entry, "context", path);
    const auto row = Field<std::vector<double>>(entry, "counts", path);
    if (row.size() != vocab_size + 1 || context.size() + 1 != lm->order()) {
      throw DimensionError(path + ": n-gram count row does not match dims");
    }
    for (size_t k = 0; k < row.size(); ++k) {
      if (row[k] != 0.0) lm->AddCount(context, static_cast<int>(k), row[k]);
    }
  }
  return lm;
}

}  // namespace rnnt
