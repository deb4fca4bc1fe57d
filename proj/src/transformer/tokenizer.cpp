#include <algorithm>
#include <fstream>
#include <map>

#include "dtc/error.hpp"
#include "dtc/features.hpp"
#include "dtc/transformer.hpp"

namespace dtc::tfm {

namespace {
const std::vector<std::string> kSpecialTokens = {"[PAD]", "[UNK]", "[CLS]", "[MASK]"};
}

Tokenizer::Tokenizer(std::vector<std::string> tokens, std::size_t max_len)
    : tokens_(std::move(tokens)), max_len_(max_len) {
  if (max_len_ < 1) throw ConfigError("tokenizer max_len must be at least 1");
  if (tokens_.size() < kSpecials ||
      !std::equal(kSpecialTokens.begin(), kSpecialTokens.end(), tokens_.begin())) {
    throw SchemaError("tokenizer vocabulary must start with [PAD] [UNK] [CLS] [MASK]");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw SchemaError("duplicate token in vocabulary: " + tokens_[i]);
    }
  }
}

Tokenizer Tokenizer::train(std::span<const std::string> texts, std::size_t vocab_size, std::size_t max_len) {
  if (vocab_size <= kSpecials) throw ConfigError("vocab_size must exceed the 4 special tokens");
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > vocab_size - kSpecials) ranked.resize(vocab_size - kSpecials);
  std::vector<std::string> tokens = kSpecialTokens;
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Tokenizer(std::move(tokens), max_len);
}

int Tokenizer::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

Tokenizer::Encoding Tokenizer::encode(std::string_view text) const {
  Encoding e;
  e.ids.push_back(kCls);
  for (const auto& tok : tokenize(text)) {
    if (e.ids.size() >= max_len_) break;
    e.ids.push_back(id_of(tok));
  }
  e.mask.assign(e.ids.size(), 1);
  return e;
}

double Tokenizer::unk_rate(std::span<const std::string> texts) const {
  std::size_t total = 0, unk = 0;
  for (const auto& t : texts) {
    for (const auto& tok : tokenize(t)) {
      ++total;
      unk += id_of(tok) == kUnk;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(total);
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

Tokenizer Tokenizer::load(const std::filesystem::path& path, std::size_t max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected token<TAB>id");
    const std::string id = line.substr(tab + 1);
    if (id != std::to_string(tokens.size())) {
      throw ParseError(lineno, "expected id " + std::to_string(tokens.size()) + ", got '" + id + "'");
    }
    tokens.push_back(line.substr(0, tab));
  }
  return Tokenizer(std::move(tokens), max_len);
}

}  // namespace dtc::tfm
