#include "dtc/eval.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dtc/error.hpp"

namespace dtc {

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw DimensionError("labels (" + std::to_string(labels.size()) + ") and predictions (" +
                         std::to_string(predictions.size()) + ") differ in length");
  }
  if (labels.empty()) throw DataError("cannot evaluate zero records");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw DataError("labels must be 0 or 1");
    if (y == 1) {
      (p == 1 ? cm.tp : cm.fn)++;
    } else {
      (p == 1 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

namespace {
Metric ratio(std::size_t num, std::size_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}
}  // namespace

Metric precision(const ConfusionMatrix& cm) { return ratio(cm.tp, cm.tp + cm.fp); }

Metric recall(const ConfusionMatrix& cm) { return ratio(cm.tp, cm.tp + cm.fn); }

Metric f1(const ConfusionMatrix& cm) {
  const double p = precision(cm).value, r = recall(cm).value;
  if (p + r == 0.0) return {0.0, true};
  return {2.0 * p * r / (p + r), false};
}

ClassMetrics class_metrics(std::span<const int> labels, std::span<const int> predictions,
                           int positive) {
  auto cm = confusion(labels, predictions);
  if (positive == 0) cm = {cm.tn, cm.tp, cm.fn, cm.fp};
  return {precision(cm), recall(cm), f1(cm), cm.tp + cm.fn};
}

Prf1 macro_prf1(std::span<const int> labels, std::span<const int> predictions) {
  const auto c0 = class_metrics(labels, predictions, 0);
  const auto c1 = class_metrics(labels, predictions, 1);
  return {(c0.precision.value + c1.precision.value) / 2.0,
          (c0.recall.value + c1.recall.value) / 2.0, (c0.f1.value + c1.f1.value) / 2.0};
}

RocCurve roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw DimensionError("labels and scores differ in length");
  }
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw DataError("scores must be finite");
    (labels[i] == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw DataError("ROC-AUC is undefined with a single class");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  // Twice the area in units of (1/pos)(1/neg), accumulated exactly.
  unsigned long long area2 = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    std::size_t dtp = 0, dfp = 0;
    for (; k < order.size() && scores[order[k]] == s; ++k) {
      (labels[order[k]] == 1 ? dtp : dfp)++;
    }
    area2 += static_cast<unsigned long long>(dfp) * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    roc.points.push_back(
        {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
  }
  roc.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

EvalReport evaluate_scores(const std::string& model, std::span<const int> labels,
                           std::span<const double> scores, double threshold,
                           nlohmann::json config) {
  if (labels.size() != scores.size()) throw DimensionError("labels and scores differ in length");
  std::vector<int> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? 1 : 0;

  EvalReport r;
  r.model = model;
  r.n = labels.size();
  r.threshold = threshold;
  r.cm = confusion(labels, pred);
  r.accuracy = accuracy(r.cm);
  r.per_class = {class_metrics(labels, pred, 0), class_metrics(labels, pred, 1)};
  r.macro = macro_prf1(labels, pred);
  r.roc = roc_auc(labels, scores);
  r.config = std::move(config);
  return r;
}

namespace {
nlohmann::json metric_json(const Metric& m) {
  return {{"value", m.value}, {"degenerate", m.degenerate}};
}
Metric metric_from(const nlohmann::json& j) {
  return {j.at("value").get<double>(), j.at("degenerate").get<bool>()};
}
}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (int c : {0, 1}) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"class", c},
                         {"precision", metric_json(m.precision)},
                         {"recall", metric_json(m.recall)},
                         {"f1", metric_json(m.f1)},
                         {"support", m.support}});
  }
  nlohmann::json fpr = nlohmann::json::array(), tpr = nlohmann::json::array();
  for (const auto& p : r.roc.points) {
    fpr.push_back(p.fpr);
    tpr.push_back(p.tpr);
  }
  return {{"format", "dtc-eval-report"},
          {"version", 1},
          {"model", r.model},
          {"split", r.split},
          {"n", r.n},
          {"threshold", r.threshold},
          {"confusion", {{"tp", r.cm.tp}, {"tn", r.cm.tn}, {"fp", r.cm.fp}, {"fn", r.cm.fn}}},
          {"accuracy", r.accuracy},
          {"macro", {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}}},
          {"per_class", per_class},
          {"auc", r.roc.auc},
          {"roc", {{"fpr", fpr}, {"tpr", tpr}}},
          {"config", r.config}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  if (auto problems = validate_report_json(j); !problems.empty()) {
    throw SchemaError("invalid report: " + problems.front());
  }
  EvalReport r;
  r.model = j.at("model").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.threshold = j.at("threshold").get<double>();
  const auto& c = j.at("confusion");
  r.cm = {c.at("tp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
          c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()};
  r.accuracy = j.at("accuracy").get<double>();
  const auto& m = j.at("macro");
  r.macro = {m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>()};
  for (const auto& pc : j.at("per_class")) {
    const int cls = pc.at("class").get<int>();
    r.per_class[cls] = {metric_from(pc.at("precision")), metric_from(pc.at("recall")),
                        metric_from(pc.at("f1")), pc.at("support").get<std::size_t>()};
  }
  r.roc.auc = j.at("auc").get<double>();
  const auto& fpr = j.at("roc").at("fpr");
  const auto& tpr = j.at("roc").at("tpr");
  for (std::size_t i = 0; i < fpr.size(); ++i) {
    r.roc.points.push_back({fpr[i].get<double>(), tpr[i].get<double>()});
  }
  r.config = j.at("config");
  return r;
}

std::vector<std::string> validate_report_json(const nlohmann::json& j) {
  std::vector<std::string> problems;
  auto need = [&](const nlohmann::json& obj, const char* key, auto pred, const char* what) {
    if (!obj.is_object() || !obj.contains(key) || !pred(obj.at(key))) {
      problems.push_back(std::string(key) + " must be " + what);
      return false;
    }
    return true;
  };
  auto unit = [](const nlohmann::json& v) {
    return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
  };
  auto count = [](const nlohmann::json& v) { return v.is_number_unsigned(); };
  auto metric = [&](const nlohmann::json& v) {
    return v.is_object() && v.contains("value") && unit(v.at("value")) && v.contains("degenerate") &&
           v.at("degenerate").is_boolean();
  };

  if (!j.is_object()) return {"report must be an object"};
  need(j, "format", [](const auto& v) { return v == "dtc-eval-report"; }, "\"dtc-eval-report\"");
  need(j, "version", [](const auto& v) { return v == 1; }, "1");
  need(j, "model", [](const auto& v) { return v.is_string(); }, "a string");
  need(j, "split", [](const auto& v) { return v == "train" || v == "test"; }, "train or test");
  need(j, "n", count, "a non-negative integer");
  need(j, "threshold", [](const auto& v) { return v.is_number(); }, "a number");
  need(j, "accuracy", unit, "in [0,1]");
  need(j, "auc", unit, "in [0,1]");
  need(j, "config", [](const auto& v) { return v.is_object(); }, "an object");
  if (need(j, "confusion", [](const auto& v) { return v.is_object(); }, "an object")) {
    const auto& c = j.at("confusion");
    bool ok = true;
    for (const char* k : {"tp", "tn", "fp", "fn"}) ok &= need(c, k, count, "a count");
    if (ok && j.contains("n") && j.at("n").is_number_unsigned()) {
      const auto total = c.at("tp").get<std::size_t>() + c.at("tn").get<std::size_t>() +
                         c.at("fp").get<std::size_t>() + c.at("fn").get<std::size_t>();
      if (total != j.at("n").get<std::size_t>()) problems.push_back("confusion total differs from n");
    }
  }
  if (need(j, "macro", [](const auto& v) { return v.is_object(); }, "an object")) {
    for (const char* k : {"precision", "recall", "f1"}) need(j.at("macro"), k, unit, "in [0,1]");
  }
  if (need(j, "per_class", [](const auto& v) { return v.is_array() && v.size() == 2; },
           "a two-element array")) {
    for (const auto& pc : j.at("per_class")) {
      need(pc, "class", [](const auto& v) { return v == 0 || v == 1; }, "0 or 1");
      for (const char* k : {"precision", "recall", "f1"}) need(pc, k, metric, "a metric object");
      need(pc, "support", count, "a count");
    }
  }
  if (need(j, "roc", [](const auto& v) { return v.is_object(); }, "an object")) {
    const auto& roc = j.at("roc");
    auto arr = [&](const nlohmann::json& v) {
      return v.is_array() && v.size() >= 2 && std::all_of(v.begin(), v.end(), unit);
    };
    if (need(roc, "fpr", arr, "an array of rates") && need(roc, "tpr", arr, "an array of rates")) {
      const auto& fpr = roc.at("fpr");
      const auto& tpr = roc.at("tpr");
      if (fpr.size() != tpr.size()) {
        problems.push_back("roc fpr and tpr differ in length");
      } else {
        if (fpr.front() != 0.0 || tpr.front() != 0.0) problems.push_back("roc must start at (0,0)");
        if (fpr.back() != 1.0 || tpr.back() != 1.0) problems.push_back("roc must end at (1,1)");
        for (std::size_t i = 1; i < fpr.size(); ++i) {
          if (fpr[i].get<double>() < fpr[i - 1].get<double>() ||
              tpr[i].get<double>() < tpr[i - 1].get<double>()) {
            problems.push_back("roc rates must be non-decreasing");
            break;
          }
        }
      }
    }
  }
  return problems;
}

void write_roc_csv(std::ostream& out, const RocCurve& roc) {
  out << "fpr,tpr\n";
  char buf[64];
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.fpr, p.tpr);
    out << buf;
  }
}

double round_half_even(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const int old = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(x * scale) / scale;
  std::fesetround(old);
  return r;
}

std::vector<ComparisonRow> compare_reports(std::span<const EvalReport> reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    rows.push_back({r.model, r.accuracy, r.macro.precision, r.macro.recall, r.macro.f1, r.roc.auc});
  }
  return rows;
}

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "model,accuracy,precision,recall,f1,auc\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g\n", r.accuracy, r.precision,
                  r.recall, r.f1, r.auc);
    out << r.model << buf;
  }
}

std::string render_comparison(std::span<const ComparisonRow> rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "| %-*s | Accuracy | Precision | Recall | F1-Score | ROC-AUC |\n",
                static_cast<int>(width), "Model");
  os << buf << "|" << std::string(width + 2, '-')
     << "|----------|-----------|--------|----------|---------|\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %-*s | %8.2f | %9.2f | %6.2f | %8.2f | %7.2f |\n",
                  static_cast<int>(width), r.model.c_str(), round_half_even(r.accuracy, 2),
                  round_half_even(r.precision, 2), round_half_even(r.recall, 2),
                  round_half_even(r.f1, 2), round_half_even(r.auc, 2));
    os << buf;
  }
  return os.str();
}

}  // namespace dtc
