#pragma once

#include <string>
#include <vector>

#include "tcprobe/grammars.hpp"

namespace tcprobe::testing {

inline std::string data_path(const std::string& rel) { return std::string(TCPROBE_DATA_DIR) + "/" + rel; }

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = load_word_pool(data_path("words.txt"));
  return pool;
}

inline const std::vector<std::string>& small_pool() {
  static const std::vector<std::string> pool{"machine", "learning", "deep", "model", "apple",
                                             "banana", "cherry", "quiz", "jazz", "onyx"};
  return pool;
}


}  // namespace tcprobe::testing
