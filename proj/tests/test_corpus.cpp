#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dtc/audit.hpp"
#include "dtc/corpus.hpp"
#include "dtc/csv.hpp"
#include "dtc/error.hpp"
#include "dtc/rng.hpp"
#include "support.hpp"

using namespace dtc;

TEST_CASE("csv parse handles quoting, embedded newlines and CRLF") {
  const auto rows = csv::parse("a,b,c\r\n1,\"x, y\",\"he said \"\"hi\"\"\"\r\n2,\"line1\nline2\",\r\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].fields == std::vector<std::string>{"1", "x, y", "he said \"hi\""});
  CHECK(rows[2].fields == std::vector<std::string>{"2", "line1\nline2", ""});
  CHECK(rows[2].line == 3);
}

TEST_CASE("csv parse skips a byte-order mark and blank lines") {
  const auto rows = csv::parse("\xEF\xBB\xBFid,text\n\n1,a\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].fields[0] == "id");
}

TEST_CASE("csv parse reports the line of an unterminated quote") {
  try {
    csv::parse("id,text\n1,ok\n2,\"never closed\n3,x\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(csv::parse("a,b\n1,\"x\"y\n"), ParseError);
}

TEST_CASE("csv escape round-trips through parse") {
  const std::vector<std::string> fields = {"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  std::ostringstream os;
  csv::write_row(os, fields);
  const auto rows = csv::parse(os.str());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].fields == fields);
}

TEST_CASE("parse_csv maps the five columns") {
  const auto recs = parse_csv("id,keyword,location,text,target\n1,,,\"Forest fire near La Ronge Sask. Canada\",1\n");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == 1);
  CHECK_FALSE(recs[0].keyword.has_value());
  CHECK_FALSE(recs[0].location.has_value());
  CHECK(recs[0].text == "Forest fire near La Ronge Sask. Canada");
  CHECK(recs[0].target == 1);
}

TEST_CASE("parse_csv edge cases") {
  CHECK(parse_csv("id,keyword,location,text,target\n").empty());
  CHECK_THROWS_AS(parse_csv("id,keyword,text,target\n1,,a,1\n"), SchemaError);
  // The target column is optional.
  const auto unlabeled = parse_csv("id,keyword,location,text\n7,k,l,hello\n");
  REQUIRE(unlabeled.size() == 1);
  CHECK_FALSE(unlabeled[0].target.has_value());
  CHECK(unlabeled[0].keyword == "k");

  try {
    parse_csv("id,keyword,location,text,target\n1,,,ok,1\n2,,,\"broken,0\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_csv("id,keyword,location,text,target\n1,,,a,2\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("id,keyword,location,text,target\nx,,,a,1\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("id,keyword,location,text,target\n1,,,a,1\n1,,,b,0\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("id,keyword,location,text,target\n1,,,a\n"), ParseError);
}

TEST_CASE("clean_text examples") {
  CHECK(clean_text("@user Check http://t.co/x #Ablaze NOW!!") == "check ablaze now");
  CHECK(clean_text("") == "");
  CHECK(clean_text("Flood WARNING:   13,000 evacuated") == "flood warning 13 000 evacuated");
  CHECK(clean_text("see www.example.com/page now") == "see now");
  CHECK(clean_text("https://t.co/abc") == "");
  CHECK(clean_text("Fish &amp; chips &lt;3") == "fish chips 3");
  CHECK(clean_text("caf\xC3\xA9 time") == "caf time");
  CHECK(clean_text("@a_b1 @c hi") == "hi");
}

TEST_CASE("decode_html_entities decodes the five entities in one pass") {
  CHECK(decode_html_entities("&amp;&lt;&gt;&quot;&apos;") == "&<>\"'");
  CHECK(decode_html_entities("&amp;lt;") == "&lt;");
  CHECK(decode_html_entities("&nbsp; & x") == "&nbsp; & x");
}

namespace {

std::string random_messy_string(Rng& rng) {
  static const std::vector<std::string> pieces = {
      "http://t.co/a", "https://x.y/z?q=1", "www.site.org", "@user_1", "#Tag", "&amp;", "&lt;", "FIRE",
      "flood", "  ", "\t", "!!", "13,000", "caf\xC3\xA9", "\"q\"", "a", "b2", "-", "www", "http", ".", "@", "#"};
  std::string s;
  const auto n = rng.below(12);
  for (std::uint64_t i = 0; i < n; ++i) {
    s += pieces[rng.below(pieces.size())];
    if (rng.uniform() < 0.6) s += ' ';
  }
  return s;
}

bool clean_charset(const std::string& s) {
  if (s.empty()) return true;
  if (s.front() == ' ' || s.back() == ' ') return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == ' ';
    if (!ok) return false;
    if (c == ' ' && i > 0 && s[i - 1] == ' ') return false;
  }
  return true;
}

}  // namespace

TEST_CASE("clean_text is idempotent and yields the normalized charset") {
  Rng rng(7);
  for (int i = 0; i < 5000; ++i) {
    const auto raw = random_messy_string(rng);
    const auto once = clean_text(raw);
    CHECK(clean_charset(once));
    CHECK(clean_text(once) == once);
  }
}

namespace {

RawRecord rec(std::int64_t id, std::string text, std::optional<int> target) {
  RawRecord r;
  r.id = id;
  r.text = std::move(text);
  r.target = target;
  return r;
}

}  // namespace

TEST_CASE("build_dataset drops empties and duplicates, keeping the first") {
  const auto d = build_dataset({rec(1, "Fire in the hills!", 1), rec(2, "http://t.co/only", 0),
                                rec(3, "fire in the   HILLS http://t.co/zz", 0), rec(4, "sunny day", 0)});
  REQUIRE(d.size() == 2);
  CHECK(d.records[0] == CleanRecord{1, "fire in the hills", 1});
  CHECK(d.records[1] == CleanRecord{4, "sunny day", 0});
  CHECK(d.dropped_empty == 1);
  CHECK(d.dropped_duplicates == 1);
  CHECK(d.conflicting_duplicates == 1);
  CHECK(d.positive_count == 1);
  CHECK(d.negative_count == 1);
  CHECK_THROWS_AS(build_dataset({rec(1, "a b", std::nullopt)}), DataError);
}

TEST_CASE("build_dataset never emits duplicate texts") {
  Rng rng(11);
  std::vector<RawRecord> raw;
  for (int i = 0; i < 2000; ++i) raw.push_back(rec(i, random_messy_string(rng), static_cast<int>(rng.below(2))));
  const auto d = build_dataset(raw);
  std::set<std::string> texts;
  for (const auto& r : d.records) {
    CHECK_FALSE(r.text.empty());
    CHECK(texts.insert(r.text).second);
  }
  CHECK(d.positive_count + d.negative_count == d.size());
  CHECK(d.size() + d.dropped_empty + d.dropped_duplicates == raw.size());
}

namespace {

Dataset labeled(std::size_t pos, std::size_t neg) {
  std::vector<CleanRecord> rs;
  std::int64_t id = 100;
  const std::size_t total = pos + neg;
  for (std::size_t i = 0; i < total; ++i) {
    // Interleave classes so ordering is exercised.
    const int label = (i % 2 == 0 && pos > 0) || neg == 0 ? 1 : 0;
    if (label == 1) {
      --pos;
    } else {
      --neg;
    }
    rs.push_back({id, "text " + std::to_string(id), label});
    id += 3;
  }
  return make_dataset(std::move(rs));
}

}  // namespace

TEST_CASE("stratified_split rounding example") {
  const auto d = labeled(6, 4);
  const auto s = stratified_split(d, 0.8, 1);
  CHECK(s.train.positive_count == 5);
  CHECK(s.train.negative_count == 3);
  CHECK(s.test.positive_count == 1);
  CHECK(s.test.negative_count == 1);
  const auto again = stratified_split(d, 0.8, 1);
  CHECK(again.train.records == s.train.records);
  CHECK(again.test.records == s.test.records);
}

TEST_CASE("stratified_split partitions with round-half-up class counts") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t pos = 1 + rng.below(40), neg = 1 + rng.below(40);
    const double ratio = 0.05 + 0.9 * rng.uniform();
    const auto d = labeled(pos, neg);
    const auto s = stratified_split(d, ratio, rng.next_u64());
    CHECK(s.train.positive_count == static_cast<std::size_t>(std::floor(pos * ratio + 0.5)));
    CHECK(s.train.negative_count == static_cast<std::size_t>(std::floor(neg * ratio + 0.5)));
    std::multiset<std::int64_t> ids;
    for (const auto& r : s.train.records) ids.insert(r.id);
    for (const auto& r : s.test.records) ids.insert(r.id);
    std::multiset<std::int64_t> want;
    for (const auto& r : d.records) want.insert(r.id);
    CHECK(ids == want);
    // Both sides keep dataset order.
    for (const auto* side : {&s.train, &s.test}) {
      CHECK(std::is_sorted(side->records.begin(), side->records.end(),
                           [](const CleanRecord& a, const CleanRecord& b) { return a.id < b.id; }));
    }
  }
}

TEST_CASE("stratified_split rejects bad ratios and empty classes") {
  const auto d = labeled(3, 3);
  CHECK_THROWS_AS(stratified_split(d, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(stratified_split(d, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(stratified_split(labeled(3, 0), 0.8, 1), DataError);
}

TEST_CASE("different seeds give different splits") {
  const auto d = labeled(50, 50);
  const auto a = stratified_split(d, 0.8, 1);
  const auto b = stratified_split(d, 0.8, 2);
  CHECK(a.test.records != b.test.records);
}

TEST_CASE("audited accessors record reads under the active stage") {
  const auto d = labeled(2, 2);
  ReadAudit audit;
  {
    AuditScope scope(&audit, "fit");
    (void)texts_of(d);
  }
  (void)labels_of(d);  // no active scope
  {
    AuditScope scope(&audit, "eval");
    (void)labels_of(d);
  }
  CHECK(audit.ids("fit", ReadAudit::Field::text).size() == 4);
  CHECK(audit.ids("fit", ReadAudit::Field::label).empty());
  CHECK(audit.ids("eval", ReadAudit::Field::label).size() == 4);
  CHECK(AuditScope::active() == nullptr);
}

TEST_CASE("dataset dump round-trips") {
  testing::TempDir dir("corpus");
  const auto d = build_dataset({rec(5, "Hello, \"World\"", 1), rec(9, "other text", 0)});
  std::ostringstream os;
  write_dataset_csv(os, d);
  CHECK(os.str().rfind("id,text,label\n", 0) == 0);
  testing::write_file(dir / "d.csv", os.str());
  const auto back = read_dataset_csv((dir / "d.csv").string());
  CHECK(back.records == d.records);
  CHECK(back.positive_count == 1);
}
