#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dtc {

struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Positive class is label 1.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions);

// A ratio whose denominator may vanish; `degenerate` marks the 0/0 case,
// where value is defined as 0.
struct Metric {
  double value = 0.0;
  bool degenerate = false;
};

double accuracy(const ConfusionMatrix& cm);
Metric precision(const ConfusionMatrix& cm);
Metric recall(const ConfusionMatrix& cm);
Metric f1(const ConfusionMatrix& cm);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassMetrics {
  Metric precision, recall, f1;
  std::size_t support = 0;
};

// Metrics with `positive` treated as the positive class.
ClassMetrics class_metrics(std::span<const int> labels, std::span<const int> predictions,
                           int positive);

// Unweighted mean of the two per-class values.
Prf1 macro_prf1(std::span<const int> labels, std::span<const int> predictions);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auc = 0.0;
};

// Thresholds sweep the distinct scores in descending order; tied scores
// cross together. AUC is the trapezoid under the resulting polyline, which
// equals P(s+ > s-) + P(s+ = s-)/2.
RocCurve roc_auc(std::span<const int> labels, std::span<const double> scores);

struct EvalReport {
  std::string model;
  std::string split = "test";
  std::size_t n = 0;
  double threshold = 0.5;
  ConfusionMatrix cm;
  double accuracy = 0.0;
  std::array<ClassMetrics, 2> per_class;  // index = class label
  Prf1 macro;
  RocCurve roc;
  nlohmann::json config = nlohmann::json::object();
};

// predictions = [score >= threshold].
EvalReport evaluate_scores(const std::string& model, std::span<const int> labels,
                           std::span<const double> scores, double threshold,
                           nlohmann::json config = nlohmann::json::object());

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
// Structural check of a serialized report; returns the list of problems.
std::vector<std::string> validate_report_json(const nlohmann::json& j);

void write_roc_csv(std::ostream& out, const RocCurve& roc);

// Round half to even at `decimals` places.
double round_half_even(double x, int decimals);

struct ComparisonRow {
  std::string model;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, auc = 0.0;
};

std::vector<ComparisonRow> compare_reports(std::span<const EvalReport> reports);
// Full-precision machine table: model,accuracy,precision,recall,f1,auc.
void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows);
// Display table with values rounded to two decimals.
std::string render_comparison(std::span<const ComparisonRow> rows);

}  // namespace dtc
