#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtc {

struct RawRecord {
  std::int64_t id = 0;
  std::optional<std::string> keyword;
  std::optional<std::string> location;
  std::string text;
  std::optional<int> target;
};

// Normalized labeled tweet. Text holds only [a-z0-9] words separated by
// single spaces.
struct CleanRecord {
  std::int64_t id = 0;
  std::string text;
  int label = 0;

  bool operator==(const CleanRecord&) const = default;
};

struct Dataset {
  std::vector<CleanRecord> records;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;

  // Ingestion bookkeeping; zero for datasets produced by a split.
  std::size_t dropped_empty = 0;
  std::size_t dropped_duplicates = 0;
  std::size_t conflicting_duplicates = 0;  // duplicates whose label disagreed

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

struct SplitPair {
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
  double ratio = 0.8;
};

std::vector<RawRecord> parse_csv(std::string_view content);
std::vector<RawRecord> load_csv(const std::string& path);

// Decodes &amp; &lt; &gt; &quot; &apos; in one left-to-right pass.
std::string decode_html_entities(std::string_view s);

std::string clean_text(std::string_view raw);

Dataset build_dataset(const std::vector<RawRecord>& records);

SplitPair stratified_split(const Dataset& data, double ratio, std::uint64_t seed);

// Builds a Dataset from already-clean records, recomputing class counts.
Dataset make_dataset(std::vector<CleanRecord> records);

// Audited accessors: every pipeline stage that fits on data goes through
// these, so an active AuditScope sees exactly which ids were read.
std::vector<std::string> texts_of(const Dataset& data);
std::vector<int> labels_of(const Dataset& data);

// Canonical dump with header id,text,label.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

}  // namespace dtc
