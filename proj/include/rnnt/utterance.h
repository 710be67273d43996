// include/rnnt/utterance.h

#ifndef RNNT_UTTERANCE_H_
#define RNNT_UTTERANCE_H_

#include <string>
#include <vector>

#include "rnnt/array.h"

namespace rnnt {

struct Utterance {
  std::string id;
  std::vector<int> labels;  // a_1^S, ids into the shared vocabulary
  Array features;           // T x d
};

}  // namespace rnnt

#endif  // RNNT_UTTERANCE_H_
