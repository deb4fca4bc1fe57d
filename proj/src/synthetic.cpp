#include "dtc/synthetic.hpp"

#include <array>
#include <sstream>
#include <string_view>
#include <vector>

#include "dtc/csv.hpp"
#include "dtc/rng.hpp"

namespace dtc {

namespace {

constexpr std::array kDisaster = {
    "earthquake", "evacuation", "wildfire", "casualties", "wreckage", "collapsed", "injured", "killed",
    "rescue", "survivors", "emergency", "derailment", "hurricane", "tornado", "tsunami", "explosion",
    "flooding", "landslide", "ambulance", "firefighters", "debris", "victims", "magnitude", "aftershock",
    "displaced", "quarantine", "outbreak", "hostages", "bombing", "crash", "fatalities", "sinkhole",
    "volcano", "eruption", "evacuated", "police", "suicide", "bomber", "military", "refugees",
    "typhoon", "cyclone", "wounded", "trapped", "damage", "destroyed", "storm", "warning"};

constexpr std::array kEveryday = {
    "lol", "love", "song", "album", "game", "movie", "party", "weekend", "coffee", "pizza",
    "shopping", "birthday", "music", "video", "follow", "selfie", "dress", "beautiful", "friends",
    "happy", "excited", "summer", "beach", "dinner", "playing", "listening", "favorite", "funny",
    "awesome", "cute", "photo", "youtube", "episode", "fashion", "hair", "tonight", "boyfriend",
    "girlfriend", "gym", "workout", "season", "team", "goal", "win", "fans", "tickets", "concert"};

// Words that appear in both classes, literally or figuratively.
constexpr std::array kAmbiguous = {"fire", "flood", "burning", "attack", "blew", "disaster", "screaming",
                                   "panic", "dead", "destroy", "bleeding", "ablaze", "siren", "wrecked",
                                   "hijack", "collide", "drown", "sinking", "crush", "deluge"};

constexpr std::array kFiller = {
    "the", "a", "in", "on", "at", "to", "of", "and", "is", "was", "my", "this", "that", "it", "for",
    "with", "just", "now", "new", "after", "near", "from", "all", "so", "about", "you", "we", "they",
    "there", "here", "today", "people", "city", "news", "via", "up", "out", "im", "have", "got"};

constexpr std::array kPlaces = {"California", "New York", "London", "Nigeria", "Mumbai", "Texas",
                                "Canada", "Japan", "Florida", "Sydney", "Chicago", "Manila"};

constexpr std::array kSyllables = {"ka", "lo", "mi", "ru", "ten", "var", "qui", "zo", "bel", "dra",
                                   "nor", "pex", "sti", "um", "gor", "fa", "li", "so", "trek", "wen"};

template <typename A>
std::string_view pick(const A& arr, Rng& rng) {
  return arr[rng.below(arr.size())];
}

std::string rare_word(Rng& rng) {
  std::string w;
  const auto n = 2 + rng.below(2);
  for (std::uint64_t i = 0; i < n; ++i) w += pick(kSyllables, rng);
  return w;
}

std::string make_tweet(int topic, Rng& rng) {
  std::vector<std::string> words;
  const auto n_topic = 1 + rng.below(3);
  for (std::uint64_t i = 0; i < n_topic; ++i) {
    words.emplace_back(topic == 1 ? pick(kDisaster, rng) : pick(kEveryday, rng));
  }
  // Occasional cross-topic word keeps the classes overlapping.
  if (rng.uniform() < 0.25) words.emplace_back(topic == 1 ? pick(kEveryday, rng) : pick(kDisaster, rng));
  if (rng.uniform() < 0.45) words.emplace_back(pick(kAmbiguous, rng));
  const auto n_fill = 3 + rng.below(8);
  for (std::uint64_t i = 0; i < n_fill; ++i) words.emplace_back(pick(kFiller, rng));
  if (rng.uniform() < 0.5) words.push_back(rare_word(rng));
  rng.shuffle(words);

  std::string text;
  for (const auto& w : words) {
    if (!text.empty()) text += ' ';
    const double u = rng.uniform();
    if (u < 0.05) {
      text += '#' + w;
    } else if (u < 0.08) {
      std::string up = w;
      for (char& c : up) c = static_cast<char>(c >= 'a' && c <= 'z' ? c - 32 : c);
      text += up;
    } else {
      text += w;
    }
  }
  if (rng.uniform() < 0.15) text.insert(0, "@" + rare_word(rng) + "_" + std::to_string(rng.below(100)) + " ");
  if (rng.uniform() < 0.1) text += " &amp; more";
  if (rng.uniform() < 0.4) text += " http://t.co/" + rare_word(rng) + std::to_string(rng.below(1000));
  return text;
}

}  // namespace

std::string synthetic_corpus_csv(const SyntheticOptions& options) {
  Rng root(options.seed);
  Rng label_rng = root.substream("labels");
  Rng text_rng = root.substream("texts");
  Rng meta_rng = root.substream("meta");

  std::ostringstream out;
  out << "id,keyword,location,text,target\n";
  std::vector<std::pair<std::string, int>> emitted;
  std::int64_t id = 1;
  for (std::size_t r = 0; r < options.rows; ++r) {
    std::string text;
    int label;
    if (!emitted.empty() && label_rng.uniform() < options.duplicate_rate) {
      const auto& prev = emitted[label_rng.below(emitted.size())];
      text = prev.first;
      label = prev.second;
    } else {
      const int topic = label_rng.uniform() < options.positive_rate ? 1 : 0;
      label = label_rng.uniform() < options.label_noise ? 1 - topic : topic;
      text = make_tweet(topic, text_rng);
      emitted.emplace_back(text, label);
    }
    const std::string keyword = meta_rng.uniform() < 0.3 ? "" : std::string(pick(kAmbiguous, meta_rng));
    const std::string location = meta_rng.uniform() < 0.35 ? "" : std::string(pick(kPlaces, meta_rng));
    csv::write_row(out, {std::to_string(id), keyword, location, text, std::to_string(label)});
    id += 1 + static_cast<std::int64_t>(meta_rng.below(3));
  }
  return out.str();
}

}  // namespace dtc
