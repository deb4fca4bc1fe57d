#pragma once

#include <cmath>
#include <string>

#include "dtc/classical.hpp"
#include "dtc/error.hpp"

namespace dtc::detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

// Checks shape agreement, binary labels and feature bounds. With
// `need_both_classes`, a single-class label vector is rejected.
inline void validate(const TrainingSet& data, bool need_both_classes) {
  if (data.x.size() != data.y.size()) {
    throw DimensionError("feature rows (" + std::to_string(data.x.size()) + ") and labels (" +
                         std::to_string(data.y.size()) + ") differ in length");
  }
  if (data.x.empty()) throw DataError("training set is empty");
  std::size_t pos = 0;
  for (int y : data.y) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  if (need_both_classes && (pos == 0 || pos == data.y.size())) {
    throw DataError("training data must contain both classes");
  }
  for (const auto& row : data.x) {
    if (!row.empty() && row.entries().back().index >= data.dim) {
      throw DimensionError("feature index " + std::to_string(row.entries().back().index) +
                           " out of range for dimension " + std::to_string(data.dim));
    }
  }
}

}  // namespace dtc::detail
