// include/rnnt/vocab.h

#ifndef RNNT_VOCAB_H_
#define RNNT_VOCAB_H_

#include <string>
#include <unordered_map>
#include <vector>

namespace rnnt {

// Label inventory V. Blank, start and sentence-end are never part of it;
// networks place them at index size() in their own tables.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> labels);

  // Labels "w00", "w01", ... for synthetic tasks.
  static Vocabulary Synthetic(size_t size);

  size_t size() const { return labels_.size(); }
  const std::string &Label(int id) const;
  // Throws ArgumentError for unknown labels.
  int Id(const std::string &label) const;
  bool Contains(const std::string &label) const {
    return index_.count(label) != 0;
  }
  const std::vector<std::string> &labels() const { return labels_; }

  std::string Render(const std::vector<int> &ids) const;
  std::vector<int> Parse(const std::string &text) const;

  bool operator==(const Vocabulary &other) const {
    return labels_ == other.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace rnnt

#endif  // RNNT_VOCAB_H_
