#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace dtc {

// Stand-in corpus in the id,keyword,location,text,target layout of the
// disaster-tweets training file. Tweets mix class-specific vocabulary,
// shared ambiguous words ("fire", "flood" used figuratively), filler, URLs,
// mentions, hashtags and HTML entities; a fraction of labels is flipped.
struct SyntheticOptions {
  std::size_t rows = 7613;
  double positive_rate = 0.43;
  double label_noise = 0.12;
  double duplicate_rate = 0.01;  // rows that repeat an earlier text
  std::uint64_t seed = 42;
};

std::string synthetic_corpus_csv(const SyntheticOptions& options);

}  // namespace dtc
