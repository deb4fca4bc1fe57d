#include "dtc/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "dtc/audit.hpp"
#include "dtc/csv.hpp"
#include "dtc/error.hpp"
#include "dtc/rng.hpp"

namespace dtc {

namespace {

bool is_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::string> non_empty(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

std::vector<RawRecord> parse_csv(std::string_view content) {
  const auto rows = csv::parse(content);
  if (rows.empty()) throw SchemaError("missing header row");

  const auto& header = rows.front().fields;
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto id_col = column("id");
  const auto keyword_col = column("keyword");
  const auto location_col = column("location");
  const auto text_col = column("text");
  const auto target_col = column("target");
  for (auto [name, col] : {std::pair{"id", id_col}, std::pair{"keyword", keyword_col},
                           std::pair{"location", location_col}, std::pair{"text", text_col}}) {
    if (!col) throw SchemaError(std::string("missing required column '") + name + "'");
  }

  std::vector<RawRecord> out;
  out.reserve(rows.size() - 1);
  std::unordered_set<std::int64_t> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw ParseError(row.line, "expected " + std::to_string(header.size()) + " fields, got " +
                                     std::to_string(row.fields.size()));
    }
    RawRecord rec;
    auto id = parse_int(row.fields[*id_col]);
    if (!id) throw ParseError(row.line, "id is not an integer: '" + row.fields[*id_col] + "'");
    if (!seen.insert(*id).second) {
      throw ParseError(row.line, "duplicate id " + std::to_string(*id));
    }
    rec.id = *id;
    rec.keyword = non_empty(row.fields[*keyword_col]);
    rec.location = non_empty(row.fields[*location_col]);
    rec.text = row.fields[*text_col];
    if (target_col && !row.fields[*target_col].empty()) {
      const auto& t = row.fields[*target_col];
      if (t != "0" && t != "1") throw ParseError(row.line, "target must be 0 or 1, got '" + t + "'");
      rec.target = t == "1" ? 1 : 0;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<RawRecord> load_csv(const std::string& path) {
  return parse_csv(csv::read_file(path));
}

std::string decode_html_entities(std::string_view s) {
  static constexpr std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    bool matched = false;
    if (s[i] == '&') {
      for (const auto& [name, ch] : kEntities) {
        if (s.substr(i, name.size()) == name) {
          out.push_back(ch);
          i += name.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out.push_back(s[i++]);
  }
  return out;
}

std::string clean_text(std::string_view raw) {
  std::string s = decode_html_entities(raw);
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }

  // URL spans run from the prefix to the next whitespace. "www." only counts
  // at the start of a word so that e.g. "awww." survives.
  std::string no_urls;
  no_urls.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const std::string_view rest(s.data() + i, s.size() - i);
    const bool word_start = i == 0 || !is_alnum(static_cast<unsigned char>(s[i - 1]));
    if (rest.starts_with("http://") || rest.starts_with("https://") ||
        (word_start && rest.starts_with("www."))) {
      while (i < s.size() && !is_space(static_cast<unsigned char>(s[i]))) ++i;
      no_urls.push_back(' ');
      continue;
    }
    no_urls.push_back(s[i++]);
  }

  // Mentions: '@' plus the handle characters that follow it.
  std::string no_mentions;
  no_mentions.reserve(no_urls.size());
  for (std::size_t i = 0; i < no_urls.size();) {
    if (no_urls[i] == '@') {
      ++i;
      while (i < no_urls.size() &&
             (is_alnum(static_cast<unsigned char>(no_urls[i])) || no_urls[i] == '_')) {
        ++i;
      }
      no_mentions.push_back(' ');
      continue;
    }
    no_mentions.push_back(no_urls[i++]);
  }

  std::string out;
  out.reserve(no_mentions.size());
  bool pending_space = false;
  for (unsigned char c : no_mentions) {
    if (c == '#') continue;
    if (is_alnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

Dataset build_dataset(const std::vector<RawRecord>& records) {
  Dataset ds;
  std::unordered_map<std::string, int> first_label;
  for (const auto& raw : records) {
    if (!raw.target) {
      throw DataError("record " + std::to_string(raw.id) + " has no target label");
    }
  }
  for (const auto& raw : records) {
    std::string text = clean_text(raw.text);
    if (text.empty()) {
      ++ds.dropped_empty;
      continue;
    }
    auto [it, inserted] = first_label.emplace(text, *raw.target);
    if (!inserted) {
      ++ds.dropped_duplicates;
      if (it->second != *raw.target) ++ds.conflicting_duplicates;
      continue;
    }
    ds.records.push_back({raw.id, std::move(text), *raw.target});
  }
  for (const auto& r : ds.records) (r.label == 1 ? ds.positive_count : ds.negative_count)++;
  return ds;
}

Dataset make_dataset(std::vector<CleanRecord> records) {
  Dataset ds;
  ds.records = std::move(records);
  for (const auto& r : ds.records) (r.label == 1 ? ds.positive_count : ds.negative_count)++;
  return ds;
}

SplitPair stratified_split(const Dataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must lie strictly between 0 and 1");
  }
  const Rng root(seed);
  std::vector<char> to_train(data.size(), 0);
  for (int label : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.records[i].label == label) members.push_back(i);
    }
    if (members.empty()) {
      throw DataError("class " + std::to_string(label) + " has no records");
    }
    Rng rng = root.substream("split", static_cast<std::uint64_t>(label));
    rng.shuffle(members);
    const auto n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * ratio + 0.5));
    for (std::size_t k = 0; k < n_train; ++k) to_train[members[k]] = 1;
  }

  std::vector<CleanRecord> train, test;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (to_train[i] ? train : test).push_back(data.records[i]);
  }
  SplitPair split;
  split.train = make_dataset(std::move(train));
  split.test = make_dataset(std::move(test));
  split.seed = seed;
  split.ratio = ratio;
  return split;
}

namespace {
std::vector<std::int64_t> ids_of(const Dataset& data) {
  std::vector<std::int64_t> ids;
  ids.reserve(data.size());
  for (const auto& r : data.records) ids.push_back(r.id);
  return ids;
}
}  // namespace

std::vector<std::string> texts_of(const Dataset& data) {
  if (auto* audit = AuditScope::active()) {
    audit->record(AuditScope::active_stage(), ReadAudit::Field::text, ids_of(data));
  }
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& r : data.records) out.push_back(r.text);
  return out;
}

std::vector<int> labels_of(const Dataset& data) {
  if (auto* audit = AuditScope::active()) {
    audit->record(AuditScope::active_stage(), ReadAudit::Field::label, ids_of(data));
  }
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& r : data.records) out.push_back(r.label);
  return out;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "id,text,label\n";
  for (const auto& r : data.records) {
    csv::write_row(out, {std::to_string(r.id), r.text, std::to_string(r.label)});
  }
}

Dataset read_dataset_csv(const std::string& path) {
  const auto rows = csv::parse(csv::read_file(path));
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"id", "text", "label"}) {
    throw SchemaError(path + ": expected header id,text,label");
  }
  std::vector<CleanRecord> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 3) throw ParseError(rows[r].line, "expected 3 fields");
    auto id = parse_int(f[0]);
    if (!id || (f[2] != "0" && f[2] != "1")) throw ParseError(rows[r].line, "bad id or label");
    records.push_back({*id, f[1], f[2] == "1" ? 1 : 0});
  }
  return make_dataset(std::move(records));
}

}  // namespace dtc
