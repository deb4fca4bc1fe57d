#include <cmath>
#include <limits>
#include <sstream>

#include "common.hpp"

namespace dtc {

NaiveBayesModel::NaiveBayesModel(std::array<double, 2> log_prior,
                                 std::array<std::vector<double>, 2> log_likelihood, double alpha)
    : log_prior_(log_prior), log_likelihood_(std::move(log_likelihood)), alpha_(alpha) {
  if (log_likelihood_[0].size() != log_likelihood_[1].size()) {
    throw DimensionError("naive bayes likelihood rows differ in length");
  }
  log_ratio_.resize(log_likelihood_[0].size());
  for (std::size_t t = 0; t < log_ratio_.size(); ++t) {
    log_ratio_[t] = log_likelihood_[1][t] - log_likelihood_[0][t];
  }
}

double NaiveBayesModel::score(const SparseVector& counts) const {
  double s = log_prior_[1] - log_prior_[0];
  for (const auto& e : counts) {
    if (e.index < log_ratio_.size()) s += e.value * log_ratio_[e.index];
  }
  return s;
}

nlohmann::json NaiveBayesModel::to_json() const {
  return {{"model_type", "nb"},
          {"config", {{"alpha", alpha_}}},
          {"dim", log_ratio_.size()},
          {"log_prior", log_prior_},
          {"log_likelihood", log_likelihood_}};
}

std::string NaiveBayesModel::describe() const {
  std::ostringstream os;
  os << "multinomial naive bayes, alpha " << alpha_ << ", dim " << log_ratio_.size() << "\n"
     << "  log_prior: [" << log_prior_[0] << ", " << log_prior_[1] << "]\n";
  return os.str();
}

NaiveBayesModel fit_naive_bayes(const TrainingSet& counts, double alpha) {
  if (!(alpha > 0)) throw ConfigError("naive bayes alpha must be positive");
  detail::validate(counts, false);

  std::array<std::vector<double>, 2> totals{std::vector<double>(counts.dim, 0.0),
                                            std::vector<double>(counts.dim, 0.0)};
  std::array<double, 2> class_docs{0.0, 0.0};
  for (std::size_t i = 0; i < counts.x.size(); ++i) {
    const int c = counts.y[i];
    class_docs[c] += 1.0;
    for (const auto& e : counts.x[i]) {
      if (e.value < 0 || e.value != std::floor(e.value)) {
        throw DataError("naive bayes expects non-negative integer counts");
      }
      totals[c][e.index] += e.value;
    }
  }

  const double n = static_cast<double>(counts.x.size());
  const double v = static_cast<double>(counts.dim);
  std::array<double, 2> log_prior{};
  std::array<std::vector<double>, 2> log_lik;
  for (int c : {0, 1}) {
    // An absent class has its prior floored at the smallest normal double.
    log_prior[c] = std::log(std::max(class_docs[c] / n, std::numeric_limits<double>::min()));
    double sum = 0.0;
    for (double t : totals[c]) sum += t;
    const double denom = std::log(sum + alpha * v);
    log_lik[c].resize(counts.dim);
    for (std::size_t t = 0; t < counts.dim; ++t) {
      log_lik[c][t] = std::log(totals[c][t] + alpha) - denom;
    }
  }
  return NaiveBayesModel(log_prior, std::move(log_lik), alpha);
}

}  // namespace dtc
