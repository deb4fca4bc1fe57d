#include "dtc/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "dtc/error.hpp"

namespace dtc {

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) break;
    std::string_view tok = text.substr(start, i - start);
    const bool numeric = std::all_of(tok.begin(), tok.end(),
                                     [](unsigned char c) { return c >= '0' && c <= '9'; });
    if (tok.size() >= 2 || numeric) out.emplace_back(tok);
  }
  return out;
}

SparseVector::SparseVector(std::vector<SparseEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i > 0 && entries_[i].index <= entries_[i - 1].index) {
      throw DataError("sparse vector indices must be strictly increasing");
    }
    if (!std::isfinite(entries_[i].value) || entries_[i].value == 0.0) {
      throw DataError("sparse vector values must be finite and non-zero");
    }
  }
}

double SparseVector::at(std::uint32_t index) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                             [](const SparseEntry& e, std::uint32_t i) { return e.index < i; });
  return it != entries_.end() && it->index == index ? it->value : 0.0;
}

double SparseVector::dot(std::span<const double> dense) const {
  double s = 0.0;
  for (const auto& e : entries_) {
    if (e.index < dense.size()) s += e.value * dense[e.index];
  }
  return s;
}

double SparseVector::norm() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.value * e.value;
  return std::sqrt(s);
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> doc_freq,
                       std::size_t n_docs)
    : tokens_(std::move(tokens)), doc_freq_(std::move(doc_freq)), n_docs_(n_docs) {
  if (tokens_.size() != doc_freq_.size()) {
    throw DataError("vocabulary tokens and doc_freq differ in length");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (doc_freq_[i] > n_docs_) throw DataError("doc_freq exceeds n_docs for '" + tokens_[i] + "'");
    if (!index_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::int64_t Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

TfIdfModel::TfIdfModel(Vocabulary vocab, std::vector<double> idf, TfIdfOptions options)
    : vocab_(std::move(vocab)), idf_(std::move(idf)), options_(options) {
  if (idf_.size() != vocab_.size()) throw DataError("idf length differs from vocabulary size");
  for (double v : idf_) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("idf values must be positive");
  }
}

namespace {

// Sorted (index, count) pairs of the in-vocabulary tokens of `doc`.
std::vector<std::pair<std::uint32_t, std::size_t>> term_counts(const Vocabulary& vocab,
                                                               const TokenSeq& doc) {
  std::vector<std::uint32_t> idx;
  idx.reserve(doc.size());
  for (const auto& tok : doc) {
    const auto i = vocab.index_of(tok);
    if (i >= 0) idx.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(idx.begin(), idx.end());
  std::vector<std::pair<std::uint32_t, std::size_t>> counts;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t j = k;
    while (j < idx.size() && idx[j] == idx[k]) ++j;
    counts.emplace_back(idx[k], j - k);
    k = j;
  }
  return counts;
}

}  // namespace

SparseVector TfIdfModel::transform(const TokenSeq& doc) const {
  std::vector<SparseEntry> entries;
  double sq = 0.0;
  for (auto [index, count] : term_counts(vocab_, doc)) {
    const double v = static_cast<double>(count) * idf_[index];
    entries.push_back({index, v});
    sq += v * v;
  }
  if (options_.normalize && sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& e : entries) e.value *= inv;
  }
  return SparseVector(std::move(entries));
}

SparseVector TfIdfModel::count_vector(const TokenSeq& doc) const {
  std::vector<SparseEntry> entries;
  for (auto [index, count] : term_counts(vocab_, doc)) {
    entries.push_back({index, static_cast<double>(count)});
  }
  return SparseVector(std::move(entries));
}

nlohmann::json TfIdfModel::to_json() const {
  return {
      {"format", "dtc-tfidf"},
      {"version", 1},
      {"n_docs", vocab_.n_docs()},
      {"min_df", options_.min_df},
      {"max_features", options_.max_features},
      {"normalize", options_.normalize},
      {"tokens", vocab_.tokens()},
      {"doc_freq", vocab_.doc_freq()},
      {"idf", idf_},
  };
}

TfIdfModel TfIdfModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "dtc-tfidf" || j.value("version", 0) != 1) {
    throw SchemaError("not a version-1 tfidf artifact");
  }
  TfIdfOptions opt;
  opt.min_df = j.at("min_df").get<std::size_t>();
  opt.max_features = j.at("max_features").get<std::size_t>();
  opt.normalize = j.at("normalize").get<bool>();
  Vocabulary vocab(j.at("tokens").get<std::vector<std::string>>(),
                   j.at("doc_freq").get<std::vector<std::size_t>>(),
                   j.at("n_docs").get<std::size_t>());
  return TfIdfModel(std::move(vocab), j.at("idf").get<std::vector<double>>(), opt);
}

TfIdfModel fit_tfidf(std::span<const TokenSeq> corpus, const TfIdfOptions& options) {
  if (corpus.empty()) throw DataError("cannot fit tf-idf on an empty corpus");
  if (options.min_df < 1) throw ConfigError("min_df must be at least 1");
  if (options.max_features < 1) throw ConfigError("max_features must be at least 1");

  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    std::unordered_set<std::string_view> seen;
    for (const auto& tok : doc) {
      if (seen.insert(tok).second) ++df[tok];
    }
  }

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, f] : df) {
    if (f >= options.min_df) kept.emplace_back(tok, f);
  }
  if (kept.empty()) throw DataError("vocabulary is empty after min_df filtering");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (kept.size() > options.max_features) kept.resize(options.max_features);

  const std::size_t n_docs = corpus.size();
  std::vector<std::string> tokens;
  std::vector<std::size_t> doc_freq;
  std::vector<double> idf;
  for (auto& [tok, f] : kept) {
    tokens.push_back(tok);
    doc_freq.push_back(f);
    idf.push_back(std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(f))) +
                  1.0);
  }
  return TfIdfModel(Vocabulary(std::move(tokens), std::move(doc_freq), n_docs), std::move(idf),
                    options);
}

}  // namespace dtc
