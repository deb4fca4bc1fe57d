// Acceptance checks against the labelled disaster-tweet CSV: the classical
// reference table, the transformer suite and the best classical AUC.
//
// Usage: acceptance_dataset [train.csv] [output dir]
// The CSV defaults to $DTC_DATASET, then data/train.csv in the source tree.
// Exits 77 (skipped) when the file is absent.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "dtc/config.hpp"
#include "dtc/pipeline.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using namespace dtc;

namespace {

struct Reference {
  double accuracy, f1;
};

const std::map<std::string, Reference> kReference = {
    {"lr", {0.82, 0.81}}, {"svm", {0.80, 0.80}}, {"rf", {0.79, 0.78}},
    {"gb", {0.76, 0.74}}, {"nb", {0.82, 0.81}},  {"xgb", {0.79, 0.78}},
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path dataset_path(int argc, char** argv) {
  if (argc > 1) return argv[1];
  if (const char* env = std::getenv("DTC_DATASET"); env && *env) return env;
  return fs::path(DTC_SOURCE_DIR) / "data" / "train.csv";
}

}  // namespace

int main(int argc, char** argv) {
  acceptance::Ledger ledger;
  const fs::path data = dataset_path(argc, argv);
  if (!fs::is_regular_file(data)) {
    const std::string why = "dataset not found at " + data.string() + " (set DTC_DATASET)";
    ledger.blocked("1", "classical reference table", why);
    ledger.blocked("2", "transformer suite", why);
    ledger.blocked("3b", "best classical AUC >= 0.85", why);
    return 77;
  }

  RunConfig config;
  config.dataset = data;
  config.seed = 42;
  config.out_dir = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "dtc-acceptance-dataset";
  fs::remove_all(config.out_dir);
  config.validate();
  const auto prepared = prepare_data(config);
  ArtifactWriter out(config.out_dir);

  // Criterion 1 and 3b share one classical comparison.
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reports = compare_models(config, config.compare_models, prepared.split, out);
    const double elapsed = seconds_since(t0);
    bool ok = elapsed < 600.0;
    std::ostringstream detail;
    double best_auc = 0.0;
    std::string best;
    for (const auto& r : reports) {
      const auto& ref = kReference.at(r.model);
      const bool row_ok = std::abs(r.accuracy - ref.accuracy) <= 0.03 && std::abs(r.macro.f1 - ref.f1) <= 0.04;
      ok = ok && row_ok;
      detail << r.model << " acc " << fmt("%.4f", r.accuracy) << " (ref " << fmt("%.2f", ref.accuracy) << ") F1 "
             << fmt("%.4f", r.macro.f1) << " (ref " << fmt("%.2f", ref.f1) << ")" << (row_ok ? "" : " OUT") << "; ";
      if (r.roc.auc > best_auc) {
        best_auc = r.roc.auc;
        best = r.model;
      }
    }
    detail << "wall " << fmt("%.1f", elapsed) << " s";
    ledger.record("1", "classical reference table", ok, detail.str());
    ledger.record("3b", "best classical AUC >= 0.85", best_auc >= 0.85, best + " AUC " + fmt("%.4f", best_auc));
  } catch (const std::exception& e) {
    ledger.record("1", "classical reference table", false, std::string("threw: ") + e.what());
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    std::map<std::string, double> acc;
    auto run = [&](const RunConfig& c, ArtifactWriter& w, const std::string& model, const std::string& label) {
      const auto trained = train_model(c, model, prepared.split, w);
      acc[label] = evaluate_model(*trained.model, prepared.split, SplitName::test, w).accuracy;
      std::printf("  %s test accuracy %.4f (%.0f s elapsed)\n", label.c_str(), acc[label], seconds_since(t0));
      std::fflush(stdout);
    };
    run(config, out, "bert-toy", "bert-toy");
    RunConfig scratch = config;
    scratch.transformer.pretrain = false;
    scratch.out_dir = config.out_dir / "scratch";
    ArtifactWriter scratch_out(scratch.out_dir);
    run(scratch, scratch_out, "bert-toy", "bert-toy-scratch");
    run(config, out, "roberta-toy", "roberta-toy");
    run(config, out, "distil-toy", "distil-toy");
    run(config, out, "deberta-toy", "deberta-toy");
    const double elapsed = seconds_since(t0);

    const bool bert_ok = acc["bert-toy"] >= 0.72;
    const bool pretrain_ok = acc["bert-toy"] - acc["bert-toy-scratch"] >= 0.01;
    const bool distil_ok = acc["distil-toy"] >= 0.95 * acc["bert-toy"];
    const bool deberta_ok = acc["deberta-toy"] >= 0.70;
    std::ostringstream detail;
    detail << "bert " << fmt("%.4f", acc["bert-toy"]) << (bert_ok ? "" : " (<0.72)") << "; scratch "
           << fmt("%.4f", acc["bert-toy-scratch"]) << (pretrain_ok ? "" : " (gap < 1 pt)") << "; distil "
           << fmt("%.4f", acc["distil-toy"]) << (distil_ok ? "" : " (<95% of teacher)") << "; deberta "
           << fmt("%.4f", acc["deberta-toy"]) << (deberta_ok ? "" : " (<0.70)") << "; roberta "
           << fmt("%.4f", acc["roberta-toy"]) << "; wall " << fmt("%.0f", elapsed) << " s";
    ledger.record("2", "transformer suite", bert_ok && pretrain_ok && distil_ok && deberta_ok && elapsed < 3600.0,
                  detail.str());
  } catch (const std::exception& e) {
    ledger.record("2", "transformer suite", false, std::string("threw: ") + e.what());
  }
  return ledger.failed() ? 1 : 0;
}
