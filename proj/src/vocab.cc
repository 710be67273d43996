// src/vocab.cc

#include "rnnt/vocab.h"

#include <cstdio>
#include <sstream>

#include "rnnt/error.h"

namespace rnnt {

Vocabulary::Vocabulary(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  for (size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty() ||
        labels_[i].find_first_of(" \t\n") != std::string::npos) {
      throw ArgumentError("vocabulary: invalid label '" + labels_[i] + "'");
    }
    if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw ArgumentError("vocabulary: duplicate label '" + labels_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::Synthetic(size_t size) {
  std::vector<std::string> labels;
  for (size_t i = 0; i < size; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "w%02zu", i);
    labels.emplace_back(buf);
  }
  return Vocabulary(std::move(labels));
}

const std::string &Vocabulary::Label(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= labels_.size()) {
    throw ArgumentError("vocabulary: label id " + std::to_string(id) +
                        " out of range");
  }
  return labels_[id];
}

int Vocabulary::Id(const std::string &label) const {
  auto it = index_.find(label);
  if (it == index_.end()) {
    throw ArgumentError("vocabulary: unknown label '" + label + "'");
  }
  return it->second;
}

std::string Vocabulary::Render(const std::vector<int> &ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += Label(ids[i]);
  }
  return out;
}

std::vector<int> Vocabulary::Parse(const std::string &text) const {
  std::istringstream is(text);
  std::vector<int> ids;
  std::string tok;
  while (is >> tok) ids.push_back(Id(tok));
  return ids;
}

}  // namespace rnnt
