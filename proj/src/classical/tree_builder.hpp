#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dtc/classical.hpp"
#include "dtc/rng.hpp"

namespace dtc::detail {

// Per-row split statistics. A criterion scores a node from the sums
// (A, B) of its rows; split gain is score(left) + score(right) - score(parent)
// (optionally post-processed by the criterion).
//   Gini:      a = w*y, b = w,   score = (A^2 + (B - A)^2) / B
//   Variance:  a = r,   b = 1,   score = A^2 / B
//   Newton:    a = g,   b = h,   score = A^2 / (B + lambda)
struct Criterion {
  std::function<double(double a, double b)> node_score;
  std::function<double(double raw_gain)> finalize = [](double g) { return g; };
  double min_gain = 1e-12;     // accept a split only when gain > min_gain
  double min_child_b = 0.0;    // minimum B in each child
};

struct TreeParams {
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 1;  // measured in row multiplicity
  // 0 = try every feature present in the node; otherwise a random subset of
  // that many non-constant features, drawn from `rng`.
  std::size_t max_features = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const SparseVector> x, std::size_t dim);

  // `rows` lists the participating row indices; `mult` their multiplicity
  // (bootstrap counts, 1 otherwise). `leaf_value` maps the rows of a leaf
  // to its output.
  DecisionTree build(std::vector<std::uint32_t> rows, std::span<const double> a,
                     std::span<const double> b, std::span<const double> mult,
                     const Criterion& criterion, const TreeParams& params, Rng* rng,
                     const std::function<double(std::span<const std::uint32_t>)>& leaf_value);

 private:
  struct Split {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  std::int32_t grow(std::vector<std::uint32_t>& rows, std::size_t depth);
  Split best_split(std::span<const std::uint32_t> rows);

  std::span<const SparseVector> x_;
  std::size_t dim_;
  std::vector<std::int32_t> slot_;
  std::vector<std::vector<std::pair<double, std::uint32_t>>> buckets_;

  // Per-build state.
  DecisionTree tree_;
  std::span<const double> a_, b_, mult_;
  const Criterion* criterion_ = nullptr;
  const TreeParams* params_ = nullptr;
  Rng* rng_ = nullptr;
  const std::function<double(std::span<const std::uint32_t>)>* leaf_value_ = nullptr;
};

}  // namespace dtc::detail
