#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/features.hpp"

namespace dtc {

// Uniform surface over every classical model. predict() is score()
// thresholded; there is no separate prediction path.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string type() const = 0;
  virtual double score(const SparseVector& x) const = 0;
  // 0.5 for probability-scaled models, 0 for margin models.
  virtual double threshold() const = 0;
  virtual nlohmann::json to_json() const = 0;
  // Indented, human-readable dump for audit.
  virtual std::string describe() const = 0;

  int predict(const SparseVector& x) const { return score(x) >= threshold() ? 1 : 0; }
};

struct TrainingSet {
  std::span<const SparseVector> x;
  std::span<const int> y;
  std::size_t dim = 0;
};

// ---------------------------------------------------------------- linear

enum class LinearOptimizer { lbfgs, gradient_descent };

struct LogisticConfig {
  double lr = 0.1;  // step size for gradient_descent
  double l2 = 1e-4;
  std::size_t epochs = 300;
  LinearOptimizer optimizer = LinearOptimizer::lbfgs;
};

struct SvmConfig {
  double l2 = 1e-4;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
};

class LinearModel final : public Classifier {
 public:
  enum class Kind { logistic, svm };

  LinearModel(Kind kind, std::vector<double> weights, double bias, nlohmann::json config,
              std::vector<double> loss_trace);

  std::string type() const override { return kind_ == Kind::logistic ? "lr" : "svm"; }
  double score(const SparseVector& x) const override;
  double threshold() const override { return kind_ == Kind::logistic ? 0.5 : 0.0; }
  nlohmann::json to_json() const override;
  std::string describe() const override;

  double margin(const SparseVector& x) const { return x.dot(weights_) + bias_; }
  Kind kind() const noexcept { return kind_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const std::vector<double>& loss_trace() const noexcept { return loss_trace_; }

 private:
  Kind kind_;
  std::vector<double> weights_;
  double bias_;
  nlohmann::json config_;
  std::vector<double> loss_trace_;
};

// Mean log loss plus (l2/2)|w|^2; the bias is not regularized.
double logistic_objective(const TrainingSet& data, std::span<const double> w, double b, double l2);
// Mean hinge loss plus (l2/2)(|w|^2 + b^2); the bias acts as a constant feature.
double svm_objective(const TrainingSet& data, std::span<const double> w, double b, double l2);

LinearModel fit_logistic(const TrainingSet& data, const LogisticConfig& config);
LinearModel fit_linear_svm(const TrainingSet& data, const SvmConfig& config);

// ----------------------------------------------------------- naive bayes

class NaiveBayesModel final : public Classifier {
 public:
  NaiveBayesModel(std::array<double, 2> log_prior, std::array<std::vector<double>, 2> log_likelihood,
                  double alpha);

  std::string type() const override { return "nb"; }
  // Log-odds of class 1.
  double score(const SparseVector& counts) const override;
  double threshold() const override { return 0.0; }
  nlohmann::json to_json() const override;
  std::string describe() const override;

  const std::array<double, 2>& log_prior() const noexcept { return log_prior_; }
  const std::array<std::vector<double>, 2>& log_likelihood() const noexcept {
    return log_likelihood_;
  }
  double alpha() const noexcept { return alpha_; }

 private:
  std::array<double, 2> log_prior_;
  std::array<std::vector<double>, 2> log_likelihood_;
  std::vector<double> log_ratio_;
  double alpha_;
};

NaiveBayesModel fit_naive_bayes(const TrainingSet& counts, double alpha);

// ----------------------------------------------------------------- trees

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  std::int32_t depth = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(const SparseVector& x) const;
  double predict(const SparseVector& x) const { return leaf_for(x).value; }
  std::size_t depth() const;
  std::size_t leaf_count() const;
};

struct ForestConfig {
  std::size_t n_trees = 200;
  std::size_t max_depth = 1000;  // effectively unbounded on tweet-length documents
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  // Features tried per node; 0 means floor(sqrt(dim)).
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
};

struct BoostingConfig {
  std::size_t n_stages = 200;
  std::size_t max_depth = 3;
  double shrinkage = 0.1;
  std::size_t min_samples_leaf = 1;
};

struct XgbConfig {
  std::size_t n_stages = 200;
  std::size_t max_depth = 4;
  double shrinkage = 0.1;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
};

class TreeEnsemble final : public Classifier {
 public:
  enum class Kind { forest, boosting, xgb };

  TreeEnsemble(Kind kind, std::vector<DecisionTree> trees, double base_score, double shrinkage,
               std::size_t dim, nlohmann::json config, std::vector<double> loss_trace);

  std::string type() const override;
  // Forest: fraction of trees voting positive. Boosting: sigmoid of the
  // additive log-odds.
  double score(const SparseVector& x) const override;
  double threshold() const override { return 0.5; }
  nlohmann::json to_json() const override;
  std::string describe() const override;

  double raw_margin(const SparseVector& x) const;
  Kind kind() const noexcept { return kind_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  double base_score() const noexcept { return base_score_; }
  double shrinkage() const noexcept { return shrinkage_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<double>& loss_trace() const noexcept { return loss_trace_; }

 private:
  Kind kind_;
  std::vector<DecisionTree> trees_;
  double base_score_;
  double shrinkage_;
  std::size_t dim_;
  nlohmann::json config_;
  std::vector<double> loss_trace_;
};

TreeEnsemble fit_random_forest(const TrainingSet& data, const ForestConfig& config);
TreeEnsemble fit_gradient_boosting(const TrainingSet& data, const BoostingConfig& config);
TreeEnsemble fit_xgboost_like(const TrainingSet& data, const XgbConfig& config);

// Second-order leaf weight -G / (H + lambda).
double xgb_leaf_weight(double grad_sum, double hess_sum, double lambda);
// 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma.
double xgb_split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma);
// Newton step for the logistic loss over one leaf: sum(y - p) / sum(p (1 - p)).
double newton_leaf_value(std::span<const double> residuals, std::span<const double> probs);

// Mean logistic loss of raw margins.
double mean_log_loss(std::span<const double> margins, std::span<const int> y);

std::unique_ptr<Classifier> classifier_from_json(const nlohmann::json& j);

}  // namespace dtc
