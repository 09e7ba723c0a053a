#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace elnet {

// Confusion counts and derived scores for one evaluation pass. Predicted
// positive means score strictly above the threshold.
struct MetricsReport {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double roc_auc = 0.0;
  double mcc = 0.0;
  double threshold = 0.5;

  std::string to_json() const;
};

// Tie-corrected rank statistic: P(score+ > score-) + 0.5 * P(tie).
// Equals trapezoidal integration of the ROC curve.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)); 0 when any factor is 0.
double mcc(int64_t tp, int64_t fp, int64_t tn, int64_t fn);

MetricsReport compute_metrics(const std::vector<double>& scores,
                              const std::vector<int>& labels,
                              double threshold = 0.5);

// (fpr, tpr) points of the ROC curve, threshold swept from +inf down.
std::vector<std::pair<double, double>> roc_points(
    const std::vector<double>& scores, const std::vector<int>& labels);

// Stratified k-fold split. Folds are disjoint, cover every index, and keep
// each (stratum, label) group's count within one sample across folds.
struct FoldPlan {
  std::vector<std::vector<int64_t>> folds;
};

FoldPlan stratified_kfold(const std::vector<int>& labels,
                          const std::vector<int>& strata, int64_t k,
                          uint64_t seed);

}  // namespace elnet
