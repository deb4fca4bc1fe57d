#include "dtc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dtc/error.hpp"

namespace dtc {

namespace pt = boost::property_tree;

const std::vector<std::string>& classical_model_names() {
  static const std::vector<std::string> names = {"lr", "svm", "nb", "rf", "gb", "xgb"};
  return names;
}

const std::vector<std::string>& all_model_names() {
  static const std::vector<std::string> names = {"lr",  "svm", "nb", "rf", "gb", "xgb",
                                                 "bert-toy", "roberta-toy", "distil-toy", "deberta-toy"};
  return names;
}

bool is_classical(const std::string& model) {
  const auto& c = classical_model_names();
  return std::find(c.begin(), c.end(), model) != c.end();
}

namespace {

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

template <typename T>
T parse_number(const std::string& section, const std::string& key, const std::string& raw) {
  T value{};
  const char* first = raw.data();
  const char* last = raw.data() + raw.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(where(section, key) + ": cannot parse '" + raw + "'");
  }
  return value;
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ConfigError(where(section, key) + ": expected true or false, got '" + raw + "'");
}

std::vector<std::string> parse_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& section, const std::string& key,
                                  const std::string& raw)>;

template <typename T, typename Get>
Setter num(Get get) {
  return [get](RunConfig& c, const std::string& s, const std::string& k, const std::string& raw) {
    get(c) = parse_number<T>(s, k, raw);
  };
}

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  using S = std::size_t;
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"data",
       {{"path", [](RunConfig& c, auto&, auto&, const std::string& raw) { c.dataset = raw; }},
        {"split_ratio", num<double>([](RunConfig& c) -> double& { return c.split_ratio; })},
        {"seed", [](RunConfig& c, const std::string& s, const std::string& k, const std::string& raw) {
           c.seed = parse_number<std::uint64_t>(s, k, raw);
         }}}},
      {"features",
       {{"min_df", num<S>([](RunConfig& c) -> S& { return c.tfidf.min_df; })},
        {"max_features", num<S>([](RunConfig& c) -> S& { return c.tfidf.max_features; })},
        {"normalize", [](RunConfig& c, const std::string& s, const std::string& k, const std::string& raw) {
           c.tfidf.normalize = parse_bool(s, k, raw);
         }},
        {"tree_max_features", num<S>([](RunConfig& c) -> S& { return c.tree_max_features; })}}},
      {"lr",
       {{"lr", num<double>([](RunConfig& c) -> double& { return c.lr.lr; })},
        {"l2", num<double>([](RunConfig& c) -> double& { return c.lr.l2; })},
        {"epochs", num<S>([](RunConfig& c) -> S& { return c.lr.epochs; })},
        {"optimizer", [](RunConfig& c, const std::string& s, const std::string& k, const std::string& raw) {
           if (raw == "lbfgs") {
             c.lr.optimizer = LinearOptimizer::lbfgs;
           } else if (raw == "gd") {
             c.lr.optimizer = LinearOptimizer::gradient_descent;
           } else {
             throw ConfigError(where(s, k) + ": expected lbfgs or gd, got '" + raw + "'");
           }
         }}}},
      {"svm",
       {{"l2", num<double>([](RunConfig& c) -> double& { return c.svm.l2; })},
        {"epochs", num<S>([](RunConfig& c) -> S& { return c.svm.epochs; })}}},
      {"nb", {{"alpha", num<double>([](RunConfig& c) -> double& { return c.nb_alpha; })}}},
      {"rf",
       {{"n_trees", num<S>([](RunConfig& c) -> S& { return c.rf.n_trees; })},
        {"max_depth", num<S>([](RunConfig& c) -> S& { return c.rf.max_depth; })},
        {"min_samples_leaf", num<S>([](RunConfig& c) -> S& { return c.rf.min_samples_leaf; })},
        {"max_features", num<S>([](RunConfig& c) -> S& { return c.rf.max_features; })},
        {"bootstrap", [](RunConfig& c, const std::string& s, const std::string& k, const std::string& raw) {
           c.rf.bootstrap = parse_bool(s, k, raw);
         }}}},
      {"gb",
       {{"n_stages", num<S>([](RunConfig& c) -> S& { return c.gb.n_stages; })},
        {"max_depth", num<S>([](RunConfig& c) -> S& { return c.gb.max_depth; })},
        {"shrinkage", num<double>([](RunConfig& c) -> double& { return c.gb.shrinkage; })},
        {"min_samples_leaf", num<S>([](RunConfig& c) -> S& { return c.gb.min_samples_leaf; })}}},
      {"xgb",
       {{"n_stages", num<S>([](RunConfig& c) -> S& { return c.xgb.n_stages; })},
        {"max_depth", num<S>([](RunConfig& c) -> S& { return c.xgb.max_depth; })},
        {"shrinkage", num<double>([](RunConfig& c) -> double& { return c.xgb.shrinkage; })},
        {"lambda", num<double>([](RunConfig& c) -> double& { return c.xgb.lambda; })},
        {"gamma", num<double>([](RunConfig& c) -> double& { return c.xgb.gamma; })},
        {"min_child_weight", num<double>([](RunConfig& c) -> double& { return c.xgb.min_child_weight; })}}},
      {"transformer",
       {{"mlm_steps", num<S>([](RunConfig& c) -> std::optional<S>& { return c.transformer.mlm_steps; })},
        {"finetune_steps",
         num<S>([](RunConfig& c) -> std::optional<S>& { return c.transformer.finetune_steps; })},
        {"batch_size", num<S>([](RunConfig& c) -> std::optional<S>& { return c.transformer.batch_size; })},
        {"lr", num<double>([](RunConfig& c) -> std::optional<double>& { return c.transformer.lr; })},
        {"vocab_size", num<S>([](RunConfig& c) -> std::optional<S>& { return c.transformer.vocab_size; })},
        {"distill_alpha",
         num<double>([](RunConfig& c) -> std::optional<double>& { return c.transformer.distill_alpha; })},
        {"distill_temperature", num<double>([](RunConfig& c) -> std::optional<double>& {
           return c.transformer.distill_temperature;
         })},
        {"pretrain", [](RunConfig& c, const std::string& s, const std::string& k, const std::string& raw) {
           c.transformer.pretrain = parse_bool(s, k, raw);
         }}}},
      {"compare",
       {{"models", [](RunConfig& c, auto&, auto&, const std::string& raw) { c.compare_models = parse_list(raw); }}}},
      {"output", {{"dir", [](RunConfig& c, auto&, auto&, const std::string& raw) { c.out_dir = raw; }}}},
  };
  return table;
}

RunConfig from_tree(const pt::ptree& tree) {
  RunConfig c;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' outside any section");
    }
    auto sit = table.find(section);
    if (sit == table.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto kit = sit->second.find(key);
      if (kit == sit->second.end()) throw ConfigError("unknown config key " + where(section, key));
      kit->second(c, section, key, value.data());
    }
  }
  return c;
}

}  // namespace

RunConfig RunConfig::from_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_ini_string(ss.str());
}

RunConfig RunConfig::from_ini_string(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  return from_tree(tree);
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("a seed is required ([data] seed or --seed)");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("split_ratio must lie strictly between 0 and 1");
  }
  if (dataset.empty()) throw ConfigError("no dataset path ([data] path)");
  if (!std::filesystem::is_regular_file(dataset)) {
    throw ConfigError("dataset file not found: " + dataset.string());
  }
  if (tfidf.min_df < 1 || tfidf.max_features < 1 || tree_max_features < 1) {
    throw ConfigError("min_df, max_features and tree_max_features must be at least 1");
  }
  if (!(nb_alpha > 0.0)) throw ConfigError("nb alpha must be positive");
  if (rf.max_depth < 1 || gb.max_depth < 1 || xgb.max_depth < 1) {
    throw ConfigError("tree max_depth must be at least 1");
  }
  if (xgb.lambda < 0.0) throw ConfigError("xgb lambda must be non-negative");
  std::set<std::string> seen;
  for (const auto& m : compare_models) {
    const auto& all = all_model_names();
    if (std::find(all.begin(), all.end(), m) == all.end()) {
      throw ConfigError("unknown model '" + m + "' in [compare] models");
    }
    if (!seen.insert(m).second) throw ConfigError("model '" + m + "' listed twice in [compare] models");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json tr = nlohmann::json::object();
  auto put = [&tr](const char* k, const auto& v) {
    if (v) tr[k] = *v;
  };
  put("mlm_steps", transformer.mlm_steps);
  put("finetune_steps", transformer.finetune_steps);
  put("batch_size", transformer.batch_size);
  put("lr", transformer.lr);
  put("pretrain", transformer.pretrain);
  put("distill_alpha", transformer.distill_alpha);
  put("distill_temperature", transformer.distill_temperature);
  put("vocab_size", transformer.vocab_size);
  return {
      {"data", {{"path", dataset.string()}, {"split_ratio", split_ratio}, {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)}}},
      {"features",
       {{"min_df", tfidf.min_df},
        {"max_features", tfidf.max_features},
        {"normalize", tfidf.normalize},
        {"tree_max_features", tree_max_features}}},
      {"lr",
       {{"lr", lr.lr},
        {"l2", lr.l2},
        {"epochs", lr.epochs},
        {"optimizer", lr.optimizer == LinearOptimizer::lbfgs ? "lbfgs" : "gd"}}},
      {"svm", {{"l2", svm.l2}, {"epochs", svm.epochs}}},
      {"nb", {{"alpha", nb_alpha}}},
      {"rf",
       {{"n_trees", rf.n_trees},
        {"max_depth", rf.max_depth},
        {"min_samples_leaf", rf.min_samples_leaf},
        {"max_features", rf.max_features},
        {"bootstrap", rf.bootstrap}}},
      {"gb",
       {{"n_stages", gb.n_stages},
        {"max_depth", gb.max_depth},
        {"shrinkage", gb.shrinkage},
        {"min_samples_leaf", gb.min_samples_leaf}}},
      {"xgb",
       {{"n_stages", xgb.n_stages},
        {"max_depth", xgb.max_depth},
        {"shrinkage", xgb.shrinkage},
        {"lambda", xgb.lambda},
        {"gamma", xgb.gamma},
        {"min_child_weight", xgb.min_child_weight}}},
      {"transformer", tr},
      {"compare", {{"models", compare_models}}},
      {"output", {{"dir", out_dir.string()}}},
  };
}

}  // namespace dtc
