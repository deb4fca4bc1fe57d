#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace dtc {

using TokenSeq = std::vector<std::string>;

// Whitespace split of already-cleaned text. Single-character tokens are
// dropped unless they are digits.
TokenSeq tokenize(std::string_view text);

struct SparseEntry {
  std::uint32_t index = 0;
  double value = 0.0;

  bool operator==(const SparseEntry&) const = default;
};

// Entries sorted by strictly increasing index, values finite and non-zero.
class SparseVector {
 public:
  SparseVector() = default;
  // Validates ordering and values; throws DataError otherwise.
  explicit SparseVector(std::vector<SparseEntry> entries);

  const std::vector<SparseEntry>& entries() const noexcept { return entries_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  // Value at `index`, zero when absent.
  double at(std::uint32_t index) const;
  double dot(std::span<const double> dense) const;
  double norm() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const SparseVector&) const = default;

 private:
  std::vector<SparseEntry> entries_;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> doc_freq,
             std::size_t n_docs);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t n_docs() const noexcept { return n_docs_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::size_t>& doc_freq() const noexcept { return doc_freq_; }

  // Index of `token`, or -1 when out of vocabulary.
  std::int64_t index_of(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> doc_freq_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct TfIdfOptions {
  std::size_t min_df = 2;
  std::size_t max_features = 20000;
  bool normalize = true;
};

class TfIdfModel {
 public:
  TfIdfModel() = default;
  TfIdfModel(Vocabulary vocab, std::vector<double> idf, TfIdfOptions options);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  const TfIdfOptions& options() const noexcept { return options_; }
  std::size_t dim() const noexcept { return vocab_.size(); }

  SparseVector transform(const TokenSeq& doc) const;
  SparseVector count_vector(const TokenSeq& doc) const;

  nlohmann::json to_json() const;
  static TfIdfModel from_json(const nlohmann::json& j);

 private:
  Vocabulary vocab_;
  std::vector<double> idf_;
  TfIdfOptions options_;
};

// Vocabulary keeps tokens with doc_freq >= min_df, truncated to the
// max_features most frequent (ties lexicographic). Indices follow that
// order, so any top-k-by-df subset is an index prefix.
// idf = ln((1 + n_docs) / (1 + df)) + 1.
TfIdfModel fit_tfidf(std::span<const TokenSeq> corpus, const TfIdfOptions& options);

}  // namespace dtc
