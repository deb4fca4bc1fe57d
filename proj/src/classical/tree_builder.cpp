#include "tree_builder.hpp"

#include <cassert>

namespace dtc::detail {

TreeBuilder::TreeBuilder(std::span<const SparseVector> x, std::size_t dim)
    : x_(x), dim_(dim), slot_(dim, -1) {}

DecisionTree TreeBuilder::build(
    std::vector<std::uint32_t> rows, std::span<const double> a, std::span<const double> b,
    std::span<const double> mult, const Criterion& criterion, const TreeParams& params, Rng* rng,
    const std::function<double(std::span<const std::uint32_t>)>& leaf_value) {
  tree_ = DecisionTree{};
  a_ = a;
  b_ = b;
  mult_ = mult;
  criterion_ = &criterion;
  params_ = &params;
  rng_ = rng;
  leaf_value_ = &leaf_value;
  grow(rows, 0);
  return std::move(tree_);
}

std::int32_t TreeBuilder::grow(std::vector<std::uint32_t>& rows, std::size_t depth) {
  const auto idx = static_cast<std::int32_t>(tree_.nodes.size());
  tree_.nodes.push_back(TreeNode{});
  tree_.nodes[idx].depth = static_cast<std::int32_t>(depth);

  double m = 0.0;
  for (auto r : rows) m += mult_[r];

  if (depth < params_->max_depth && m >= 2.0 * static_cast<double>(params_->min_samples_leaf)) {
    const Split split = best_split(rows);
    if (split.feature >= 0) {
      std::vector<std::uint32_t> left, right;
      for (auto r : rows) {
        (x_[r].at(static_cast<std::uint32_t>(split.feature)) <= split.threshold ? left : right)
            .push_back(r);
      }
      assert(!left.empty() && !right.empty());
      rows.clear();
      rows.shrink_to_fit();
      tree_.nodes[idx].feature = split.feature;
      tree_.nodes[idx].threshold = split.threshold;
      const auto l = grow(left, depth + 1);
      const auto rr = grow(right, depth + 1);
      tree_.nodes[idx].left = l;
      tree_.nodes[idx].right = rr;
      return idx;
    }
  }
  tree_.nodes[idx].value = (*leaf_value_)(rows);
  return idx;
}

TreeBuilder::Split TreeBuilder::best_split(std::span<const std::uint32_t> rows) {
  const Criterion& crit = *criterion_;
  double total_a = 0.0, total_b = 0.0, total_m = 0.0;
  for (auto r : rows) {
    total_a += a_[r];
    total_b += b_[r];
    total_m += mult_[r];
  }
  const double parent = crit.node_score(total_a, total_b);

  // Features with at least one non-zero in this node; every other feature
  // is constant (zero) here.
  std::vector<std::uint32_t> present;
  for (auto r : rows) {
    for (const auto& e : x_[r]) {
      if (slot_[e.index] == -1) {
        slot_[e.index] = -2;
        present.push_back(e.index);
      }
    }
  }
  std::sort(present.begin(), present.end());
  if (buckets_.size() < present.size()) buckets_.resize(present.size());
  for (std::size_t k = 0; k < present.size(); ++k) {
    slot_[present[k]] = static_cast<std::int32_t>(k);
    buckets_[k].clear();
  }
  for (auto r : rows) {
    for (const auto& e : x_[r]) buckets_[slot_[e.index]].emplace_back(e.value, r);
  }

  std::vector<std::size_t> order(present.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::size_t budget = order.size();
  if (params_->max_features > 0 && params_->max_features < order.size()) {
    rng_->shuffle(order);
    budget = params_->max_features;
  }

  struct Group {
    double value, a, b, m;
  };
  std::vector<Group> groups;
  const double min_leaf = static_cast<double>(params_->min_samples_leaf);

  Split best;
  std::size_t evaluated = 0;
  for (std::size_t k : order) {
    if (evaluated >= budget) break;
    auto& bucket = buckets_[k];
    std::sort(bucket.begin(), bucket.end());

    double nz_a = 0.0, nz_b = 0.0, nz_m = 0.0;
    for (const auto& [v, r] : bucket) {
      nz_a += a_[r];
      nz_b += b_[r];
      nz_m += mult_[r];
    }
    const bool has_zero = bucket.size() < rows.size();

    groups.clear();
    bool zero_done = !has_zero;
    auto push = [&](double v, double a, double b, double m) {
      if (!groups.empty() && groups.back().value == v) {
        groups.back().a += a;
        groups.back().b += b;
        groups.back().m += m;
      } else {
        groups.push_back({v, a, b, m});
      }
    };
    for (const auto& [v, r] : bucket) {
      if (!zero_done && v > 0.0) {
        push(0.0, total_a - nz_a, total_b - nz_b, total_m - nz_m);
        zero_done = true;
      }
      push(v, a_[r], b_[r], mult_[r]);
    }
    if (!zero_done) push(0.0, total_a - nz_a, total_b - nz_b, total_m - nz_m);

    if (groups.size() < 2) continue;  // constant within the node
    ++evaluated;

    double la = 0.0, lb = 0.0, lm = 0.0;
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
      la += groups[g].a;
      lb += groups[g].b;
      lm += groups[g].m;
      const double ra = total_a - la, rb = total_b - lb, rm = total_m - lm;
      if (lm < min_leaf || rm < min_leaf) continue;
      if (lb < crit.min_child_b || rb < crit.min_child_b) continue;
      const double gain =
          crit.finalize(crit.node_score(la, lb) + crit.node_score(ra, rb) - parent);
      if (gain > crit.min_gain && gain > best.gain) {
        const double lo = groups[g].value, hi = groups[g + 1].value;
        double t = lo + (hi - lo) / 2.0;
        if (!(t >= lo && t < hi)) t = lo;
        best.feature = static_cast<std::int32_t>(present[k]);
        best.threshold = t;
        best.gain = gain;
      }
    }
  }

  for (auto f : present) slot_[f] = -1;
  return best;
}

}  // namespace dtc::detail
