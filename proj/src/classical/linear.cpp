#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include "common.hpp"
#include "dtc/rng.hpp"

namespace dtc {

LinearModel::LinearModel(Kind kind, std::vector<double> weights, double bias,
                         nlohmann::json config, std::vector<double> loss_trace)
    : kind_(kind),
      weights_(std::move(weights)),
      bias_(bias),
      config_(std::move(config)),
      loss_trace_(std::move(loss_trace)) {
  for (double w : weights_) {
    if (!std::isfinite(w)) throw NumericError("linear model weight is not finite");
  }
  if (!std::isfinite(bias_)) throw NumericError("linear model bias is not finite");
}

double LinearModel::score(const SparseVector& x) const {
  const double m = margin(x);
  return kind_ == Kind::logistic ? detail::sigmoid(m) : m;
}

nlohmann::json LinearModel::to_json() const {
  return {{"model_type", type()},
          {"config", config_},
          {"dim", weights_.size()},
          {"bias", bias_},
          {"weights", weights_},
          {"loss_trace", loss_trace_}};
}

std::string LinearModel::describe() const {
  std::ostringstream os;
  os << type() << " linear model, dim " << weights_.size() << ", bias " << bias_ << "\n";
  std::vector<std::size_t> order(weights_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(weights_[a]) > std::abs(weights_[b]);
  });
  const std::size_t shown = std::min<std::size_t>(order.size(), 20);
  os << "  largest |weights|:\n";
  for (std::size_t k = 0; k < shown; ++k) {
    os << "    [" << order[k] << "] " << weights_[order[k]] << "\n";
  }
  return os.str();
}

double logistic_objective(const TrainingSet& data, std::span<const double> w, double b,
                          double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double z = data.x[i].dot(w) + b;
    loss += data.y[i] == 1 ? detail::softplus(-z) : detail::softplus(z);
  }
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return loss / static_cast<double>(data.x.size()) + 0.5 * l2 * sq;
}

double svm_objective(const TrainingSet& data, std::span<const double> w, double b, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double y = data.y[i] == 1 ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * (data.x[i].dot(w) + b));
  }
  double sq = b * b;
  for (double v : w) sq += v * v;
  return loss / static_cast<double>(data.x.size()) + 0.5 * l2 * sq;
}

namespace {

// Objective and gradient over the packed parameter vector [w..., b].
double logistic_value_grad(const TrainingSet& data, std::span<const double> params, double l2,
                           std::vector<double>& grad) {
  const std::size_t d = data.dim;
  const auto w = params.first(d);
  const double b = params[d];
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(data.x.size());
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double z = data.x[i].dot(w) + b;
    const int y = data.y[i];
    loss += y == 1 ? detail::softplus(-z) : detail::softplus(z);
    const double r = (detail::sigmoid(z) - y) * inv_n;
    for (const auto& e : data.x[i]) grad[e.index] += r * e.value;
    grad[d] += r;
  }
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    sq += w[j] * w[j];
    grad[j] += l2 * w[j];
  }
  return loss * inv_n + 0.5 * l2 * sq;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

const char* optimizer_name(LinearOptimizer o) {
  return o == LinearOptimizer::lbfgs ? "lbfgs" : "gd";
}

}  // namespace

LinearModel fit_logistic(const TrainingSet& data, const LogisticConfig& config) {
  detail::validate(data, true);
  if (data.x.size() < 2) throw DataError("logistic regression needs at least two samples");
  if (config.l2 < 0) throw ConfigError("l2 must be non-negative");
  if (config.optimizer == LinearOptimizer::gradient_descent && !(config.lr > 0)) {
    throw ConfigError("learning rate must be positive");
  }

  const std::size_t p = data.dim + 1;
  std::vector<double> x(p, 0.0), g(p), x_new(p), g_new(p);
  double f = logistic_value_grad(data, x, config.l2, g);
  std::vector<double> trace{f};

  if (config.optimizer == LinearOptimizer::gradient_descent) {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t j = 0; j < p; ++j) x[j] -= config.lr * g[j];
      f = logistic_value_grad(data, x, config.l2, g);
      trace.push_back(f);
    }
  } else {
    // Limited-memory BFGS with Armijo backtracking, so every accepted
    // iterate lowers the objective.
    constexpr std::size_t kHistory = 10;
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> dir(p), alpha(kHistory);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      double gmax = 0.0;
      for (double v : g) gmax = std::max(gmax, std::abs(v));
      if (gmax < 1e-10) break;

      dir = g;
      const std::size_t m = s_hist.size();
      for (std::size_t k = m; k-- > 0;) {
        alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
        for (std::size_t j = 0; j < p; ++j) dir[j] -= alpha[k] * y_hist[k][j];
      }
      if (m > 0) {
        const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
        for (double& v : dir) v *= gamma;
      }
      for (std::size_t k = 0; k < m; ++k) {
        const double beta = rho_hist[k] * dot(y_hist[k], dir);
        for (std::size_t j = 0; j < p; ++j) dir[j] += (alpha[k] - beta) * s_hist[k][j];
      }
      for (double& v : dir) v = -v;

      double slope = dot(g, dir);
      if (slope >= 0) {
        for (std::size_t j = 0; j < p; ++j) dir[j] = -g[j];
        slope = dot(g, dir);
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
      }

      double step = m == 0 ? 1.0 / std::max(1.0, std::sqrt(dot(g, g))) : 1.0;
      double f_new = f;
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving) {
        for (std::size_t j = 0; j < p; ++j) x_new[j] = x[j] + step * dir[j];
        f_new = logistic_value_grad(data, x_new, config.l2, g_new);
        if (f_new <= f + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;

      std::vector<double> s(p), y(p);
      for (std::size_t j = 0; j < p; ++j) {
        s[j] = x_new[j] - x[j];
        y[j] = g_new[j] - g[j];
      }
      const double sy = dot(s, y);
      if (sy > 1e-12) {
        if (s_hist.size() == kHistory) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
        s_hist.push_back(std::move(s));
        y_hist.push_back(std::move(y));
        rho_hist.push_back(1.0 / sy);
      }
      const double decrease = f - f_new;
      x.swap(x_new);
      g.swap(g_new);
      f = f_new;
      trace.push_back(f);
      if (decrease <= 1e-15 * std::max(1.0, std::abs(f))) break;
    }
  }

  nlohmann::json cfg = {{"lr", config.lr},
                        {"l2", config.l2},
                        {"epochs", config.epochs},
                        {"optimizer", optimizer_name(config.optimizer)}};
  const double bias = x[data.dim];
  x.resize(data.dim);
  return LinearModel(LinearModel::Kind::logistic, std::move(x), bias, std::move(cfg),
                     std::move(trace));
}

LinearModel fit_linear_svm(const TrainingSet& data, const SvmConfig& config) {
  detail::validate(data, true);
  if (data.x.size() < 2) throw DataError("linear SVM needs at least two samples");
  if (!(config.l2 > 0)) throw ConfigError("svm l2 must be positive");
  if (config.epochs < 1) throw ConfigError("svm epochs must be at least 1");

  // Pegasos on the hinge loss. The bias is the weight of an implicit
  // constant feature at index dim. w = scale * v keeps updates O(nnz).
  const std::size_t d = data.dim;
  const std::size_t n = data.x.size();
  const double lambda = config.l2;
  const double radius = 1.0 / std::sqrt(lambda);
  std::vector<double> v(d + 1, 0.0);
  double scale = 1.0;
  double v_sq = 0.0;

  std::vector<double> avg(d + 1, 0.0);
  std::size_t avg_count = 0;
  const std::size_t avg_from = config.epochs / 2;

  std::vector<double> trace;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(config.seed).substream("svm");
  std::size_t t = 0;

  auto current = [&] {
    std::vector<double> w(d + 1);
    for (std::size_t j = 0; j <= d; ++j) w[j] = scale * v[j];
    return w;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = data.y[i] == 1 ? 1.0 : -1.0;
      const double m = y * scale * (data.x[i].dot(std::span<const double>(v).first(d)) + v[d]);

      const double shrink = 1.0 - eta * lambda;
      if (shrink <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
        v_sq = 0.0;
      } else {
        scale *= shrink;
      }

      if (m < 1.0) {
        const double delta = eta * y / scale;
        double vx = v[d];
        double xx = 1.0;
        for (const auto& e : data.x[i]) {
          vx += v[e.index] * e.value;
          xx += e.value * e.value;
        }
        for (const auto& e : data.x[i]) v[e.index] += delta * e.value;
        v[d] += delta;
        v_sq += 2.0 * delta * vx + delta * delta * xx;
      }

      const double norm = scale * std::sqrt(std::max(v_sq, 0.0));
      if (norm > radius) scale *= radius / norm;

      if (scale < 1e-9) {
        for (double& x : v) x *= scale;
        v_sq = 0.0;
        for (double x : v) v_sq += x * x;
        scale = 1.0;
      }
    }

    v_sq = 0.0;
    for (double x : v) v_sq += x * x;

    const auto w = current();
    trace.push_back(svm_objective(data, std::span<const double>(w).first(d), w[d], lambda));
    if (epoch >= avg_from) {
      for (std::size_t j = 0; j <= d; ++j) avg[j] += w[j];
      ++avg_count;
    }
  }

  auto w = current();
  for (double& a : avg) a /= static_cast<double>(avg_count);
  const double f_last = svm_objective(data, std::span<const double>(w).first(d), w[d], lambda);
  const double f_avg = svm_objective(data, std::span<const double>(avg).first(d), avg[d], lambda);
  if (f_avg < f_last) w = avg;

  nlohmann::json cfg = {{"l2", config.l2}, {"epochs", config.epochs}, {"seed", config.seed}};
  const double bias = w[d];
  w.resize(d);
  return LinearModel(LinearModel::Kind::svm, std::move(w), bias, std::move(cfg), std::move(trace));
}

}  // namespace dtc
