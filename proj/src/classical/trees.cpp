#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "common.hpp"
#include "tree_builder.hpp"

namespace dtc {

const TreeNode& DecisionTree::leaf_for(const SparseVector& x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(
        x.at(static_cast<std::uint32_t>(n.feature)) <= n.threshold ? n.left : n.right);
  }
  return nodes[i];
}

std::size_t DecisionTree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes) d = std::max(d, static_cast<std::size_t>(n.depth));
  return d;
}

std::size_t DecisionTree::leaf_count() const {
  std::size_t c = 0;
  for (const auto& n : nodes) c += n.feature < 0 ? 1 : 0;
  return c;
}

double xgb_leaf_weight(double grad_sum, double hess_sum, double lambda) {
  const double denom = hess_sum + lambda;
  return denom > 0.0 ? -grad_sum / denom : 0.0;
}

double xgb_split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
  auto term = [lambda](double g, double h) { return h + lambda > 0.0 ? g * g / (h + lambda) : 0.0; };
  return 0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr)) - gamma;
}

double newton_leaf_value(std::span<const double> residuals, std::span<const double> probs) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    num += residuals[i];
    den += probs[i] * (1.0 - probs[i]);
  }
  return std::abs(den) < 1e-150 ? 0.0 : num / den;
}

double mean_log_loss(std::span<const double> margins, std::span<const int> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    s += y[i] == 1 ? detail::softplus(-margins[i]) : detail::softplus(margins[i]);
  }
  return s / static_cast<double>(margins.size());
}

TreeEnsemble::TreeEnsemble(Kind kind, std::vector<DecisionTree> trees, double base_score,
                           double shrinkage, std::size_t dim, nlohmann::json config,
                           std::vector<double> loss_trace)
    : kind_(kind),
      trees_(std::move(trees)),
      base_score_(base_score),
      shrinkage_(shrinkage),
      dim_(dim),
      config_(std::move(config)),
      loss_trace_(std::move(loss_trace)) {
  for (const auto& t : trees_) {
    if (t.nodes.empty()) throw DataError("tree has no nodes");
    for (const auto& n : t.nodes) {
      if (n.feature >= 0 && static_cast<std::size_t>(n.feature) >= dim_) {
        throw DimensionError("tree split feature out of range");
      }
    }
  }
}

std::string TreeEnsemble::type() const {
  switch (kind_) {
    case Kind::forest: return "rf";
    case Kind::boosting: return "gb";
    case Kind::xgb: return "xgb";
  }
  return "?";
}

double TreeEnsemble::raw_margin(const SparseVector& x) const {
  double f = base_score_;
  for (const auto& t : trees_) f += shrinkage_ * t.predict(x);
  return f;
}

double TreeEnsemble::score(const SparseVector& x) const {
  if (kind_ == Kind::forest) {
    std::size_t votes = 0;
    for (const auto& t : trees_) votes += t.predict(x) >= 0.5 ? 1 : 0;
    return static_cast<double>(votes) / static_cast<double>(trees_.size());
  }
  return detail::sigmoid(raw_margin(x));
}

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.depth});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"model_type", type()},   {"config", config_},         {"dim", dim_},
          {"base_score", base_score_}, {"shrinkage", shrinkage_}, {"loss_trace", loss_trace_},
          {"trees", std::move(trees)}};
}

std::string TreeEnsemble::describe() const {
  std::ostringstream os;
  os << type() << " ensemble: " << trees_.size() << " trees, base " << base_score_
     << ", shrinkage " << shrinkage_ << "\n";
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    os << "tree " << t << "\n";
    const auto& nodes = trees_[t].nodes;
    // Pre-order walk; children are visited left first.
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      const auto& n = nodes[i];
      os << std::string(2 * static_cast<std::size_t>(n.depth + 1), ' ');
      if (n.feature < 0) {
        os << "leaf " << n.value << "\n";
      } else {
        os << "f" << n.feature << " <= " << n.threshold << "\n";
        stack.push_back(static_cast<std::size_t>(n.right));
        stack.push_back(static_cast<std::size_t>(n.left));
      }
    }
  }
  return os.str();
}

namespace {

double prior_log_odds(std::span<const int> y) {
  double pos = 0.0;
  for (int v : y) pos += v;
  const double p = std::clamp(pos / static_cast<double>(y.size()), 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

bool has_nonconstant_feature(const TrainingSet& data) {
  std::vector<std::size_t> count(data.dim, 0);
  std::vector<double> lo(data.dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(data.dim, -std::numeric_limits<double>::infinity());
  for (const auto& row : data.x) {
    for (const auto& e : row) {
      ++count[e.index];
      lo[e.index] = std::min(lo[e.index], e.value);
      hi[e.index] = std::max(hi[e.index], e.value);
    }
  }
  for (std::size_t f = 0; f < data.dim; ++f) {
    if (count[f] == 0) continue;
    if (count[f] < data.x.size() || lo[f] != hi[f]) return true;
  }
  return false;
}

std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
  return rows;
}

detail::Criterion gini_criterion() {
  detail::Criterion c;
  c.node_score = [](double a, double b) { return b > 0.0 ? (a * a + (b - a) * (b - a)) / b : 0.0; };
  return c;
}

detail::Criterion variance_criterion() {
  detail::Criterion c;
  c.node_score = [](double a, double b) { return b > 0.0 ? a * a / b : 0.0; };
  return c;
}

detail::Criterion newton_criterion(double lambda, double gamma, double min_child_weight) {
  detail::Criterion c;
  c.node_score = [lambda](double a, double b) { return b + lambda > 0.0 ? a * a / (b + lambda) : 0.0; };
  c.finalize = [gamma](double raw) { return 0.5 * raw - gamma; };
  c.min_gain = 0.0;
  c.min_child_b = min_child_weight;
  return c;
}

}  // namespace

TreeEnsemble fit_random_forest(const TrainingSet& data, const ForestConfig& config) {
  if (config.max_depth < 1) throw ConfigError("forest max_depth must be at least 1");
  if (config.n_trees < 1) throw ConfigError("forest needs at least one tree");
  if (config.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
  detail::validate(data, false);
  if (!has_nonconstant_feature(data)) throw DataError("no feature varies across samples");

  const std::size_t n = data.x.size();
  const std::size_t mtry = config.max_features > 0
                               ? config.max_features
                               : std::max<std::size_t>(
                                     1, static_cast<std::size_t>(std::sqrt(static_cast<double>(data.dim))));
  detail::TreeParams params{config.max_depth, config.min_samples_leaf, mtry};
  const auto criterion = gini_criterion();
  const Rng root(config.seed);

  std::vector<DecisionTree> trees(config.n_trees);
  auto fit_one = [&](detail::TreeBuilder& builder, std::size_t t) {
    Rng rng = root.substream("bootstrap", t);
    std::vector<double> mult(n, 0.0);
    if (config.bootstrap) {
      for (std::size_t k = 0; k < n; ++k) mult[rng.below(n)] += 1.0;
    } else {
      std::fill(mult.begin(), mult.end(), 1.0);
    }
    std::vector<double> a(n), b(n);
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = mult[i] * data.y[i];
      b[i] = mult[i];
      if (mult[i] > 0) rows.push_back(static_cast<std::uint32_t>(i));
    }
    auto leaf = [&](std::span<const std::uint32_t> leaf_rows) {
      double sa = 0.0, sb = 0.0;
      for (auto r : leaf_rows) {
        sa += a[r];
        sb += b[r];
      }
      return sb > 0.0 ? sa / sb : 0.0;
    };
    trees[t] = builder.build(std::move(rows), a, b, mult, criterion, params, &rng, leaf);
  };

  // Trees draw from independent substreams, so the thread split cannot
  // change the result.
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), config.n_trees));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    detail::TreeBuilder builder(data.x, data.dim);
    for (std::size_t t; (t = next.fetch_add(1)) < config.n_trees;) fit_one(builder, t);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  nlohmann::json cfg = {{"n_trees", config.n_trees},
                        {"max_depth", config.max_depth},
                        {"min_samples_leaf", config.min_samples_leaf},
                        {"bootstrap", config.bootstrap},
                        {"max_features", mtry},
                        {"seed", config.seed}};
  return TreeEnsemble(TreeEnsemble::Kind::forest, std::move(trees), 0.0, 1.0, data.dim,
                      std::move(cfg), {});
}

TreeEnsemble fit_gradient_boosting(const TrainingSet& data, const BoostingConfig& config) {
  if (config.max_depth < 1) throw ConfigError("boosting max_depth must be at least 1");
  if (!(config.shrinkage > 0)) throw ConfigError("shrinkage must be positive");
  if (config.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
  detail::validate(data, false);

  const std::size_t n = data.x.size();
  const double base = prior_log_odds(data.y);
  std::vector<double> f(n, base), p(n), r(n);
  const std::vector<double> ones(n, 1.0);
  std::vector<double> trace{mean_log_loss(f, data.y)};
  detail::TreeParams params{config.max_depth, config.min_samples_leaf, 0};
  const auto criterion = variance_criterion();
  detail::TreeBuilder builder(data.x, data.dim);

  std::vector<DecisionTree> trees;
  for (std::size_t stage = 0; stage < config.n_stages; ++stage) {
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = detail::sigmoid(f[i]);
      r[i] = data.y[i] - p[i];
    }
    auto leaf = [&](std::span<const std::uint32_t> rows) {
      double num = 0.0, den = 0.0;
      for (auto k : rows) {
        num += r[k];
        den += p[k] * (1.0 - p[k]);
      }
      return std::abs(den) < 1e-150 ? 0.0 : num / den;
    };
    auto tree = builder.build(all_rows(n), r, ones, ones, criterion, params, nullptr, leaf);
    for (std::size_t i = 0; i < n; ++i) f[i] += config.shrinkage * tree.predict(data.x[i]);
    trees.push_back(std::move(tree));
    trace.push_back(mean_log_loss(f, data.y));
  }

  nlohmann::json cfg = {{"n_stages", config.n_stages},
                        {"max_depth", config.max_depth},
                        {"shrinkage", config.shrinkage},
                        {"min_samples_leaf", config.min_samples_leaf}};
  return TreeEnsemble(TreeEnsemble::Kind::boosting, std::move(trees), base, config.shrinkage,
                      data.dim, std::move(cfg), std::move(trace));
}

TreeEnsemble fit_xgboost_like(const TrainingSet& data, const XgbConfig& config) {
  if (config.lambda < 0) throw ConfigError("xgb lambda must be non-negative");
  if (config.gamma < 0) throw ConfigError("xgb gamma must be non-negative");
  if (config.max_depth < 1) throw ConfigError("xgb max_depth must be at least 1");
  if (!(config.shrinkage > 0)) throw ConfigError("shrinkage must be positive");
  detail::validate(data, false);

  const std::size_t n = data.x.size();
  const double base = prior_log_odds(data.y);
  std::vector<double> f(n, base), g(n), h(n);
  const std::vector<double> ones(n, 1.0);
  std::vector<double> trace{mean_log_loss(f, data.y)};
  detail::TreeParams params{config.max_depth, 1, 0};
  const auto criterion = newton_criterion(config.lambda, config.gamma, config.min_child_weight);
  detail::TreeBuilder builder(data.x, data.dim);

  std::vector<DecisionTree> trees;
  for (std::size_t stage = 0; stage < config.n_stages; ++stage) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = detail::sigmoid(f[i]);
      g[i] = p - data.y[i];
      h[i] = p * (1.0 - p);
    }
    auto leaf = [&](std::span<const std::uint32_t> rows) {
      double gs = 0.0, hs = 0.0;
      for (auto k : rows) {
        gs += g[k];
        hs += h[k];
      }
      return xgb_leaf_weight(gs, hs, config.lambda);
    };
    auto tree = builder.build(all_rows(n), g, h, ones, criterion, params, nullptr, leaf);
    for (std::size_t i = 0; i < n; ++i) f[i] += config.shrinkage * tree.predict(data.x[i]);
    trees.push_back(std::move(tree));
    trace.push_back(mean_log_loss(f, data.y));
  }

  nlohmann::json cfg = {{"n_stages", config.n_stages},       {"max_depth", config.max_depth},
                        {"shrinkage", config.shrinkage},     {"lambda", config.lambda},
                        {"gamma", config.gamma},             {"min_child_weight", config.min_child_weight}};
  return TreeEnsemble(TreeEnsemble::Kind::xgb, std::move(trees), base, config.shrinkage, data.dim,
                      std::move(cfg), std::move(trace));
}

std::unique_ptr<Classifier> classifier_from_json(const nlohmann::json& j) {
  const auto type = j.at("model_type").get<std::string>();
  if (type == "lr" || type == "svm") {
    return std::make_unique<LinearModel>(
        type == "lr" ? LinearModel::Kind::logistic : LinearModel::Kind::svm,
        j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(), j.at("config"),
        j.at("loss_trace").get<std::vector<double>>());
  }
  if (type == "nb") {
    return std::make_unique<NaiveBayesModel>(
        j.at("log_prior").get<std::array<double, 2>>(),
        j.at("log_likelihood").get<std::array<std::vector<double>, 2>>(),
        j.at("config").at("alpha").get<double>());
  }
  if (type == "rf" || type == "gb" || type == "xgb") {
    std::vector<DecisionTree> trees;
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      for (const auto& jn : jt) {
        TreeNode n;
        n.feature = jn.at(0).get<std::int32_t>();
        n.threshold = jn.at(1).get<double>();
        n.left = jn.at(2).get<std::int32_t>();
        n.right = jn.at(3).get<std::int32_t>();
        n.value = jn.at(4).get<double>();
        n.depth = jn.at(5).get<std::int32_t>();
        t.nodes.push_back(n);
      }
      trees.push_back(std::move(t));
    }
    const auto kind = type == "rf"   ? TreeEnsemble::Kind::forest
                      : type == "gb" ? TreeEnsemble::Kind::boosting
                                     : TreeEnsemble::Kind::xgb;
    return std::make_unique<TreeEnsemble>(kind, std::move(trees), j.at("base_score").get<double>(),
                                          j.at("shrinkage").get<double>(),
                                          j.at("dim").get<std::size_t>(), j.at("config"),
                                          j.at("loss_trace").get<std::vector<double>>());
  }
  throw SchemaError("unknown model_type '" + type + "'");
}

}  // namespace dtc
