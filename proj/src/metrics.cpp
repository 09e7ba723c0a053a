#include "elnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "elnet/rng.hpp"

namespace elnet {

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("roc_auc: scores/labels size mismatch");
  int64_t npos = 0, nneg = 0;
  for (int l : labels) (l ? npos : nneg)++;
  if (npos == 0 || nneg == 0)
    throw std::invalid_argument("roc_auc: both classes must be present");

  // midrank sum over positives
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t)
      if (labels[idx[t]]) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double mcc(int64_t tp, int64_t fp, int64_t tn, int64_t fn) {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0)
    throw std::invalid_argument("mcc: counts must be >= 0");
  const double d1 = static_cast<double>(tp + fp);
  const double d2 = static_cast<double>(tp + fn);
  const double d3 = static_cast<double>(tn + fp);
  const double d4 = static_cast<double>(tn + fn);
  if (d1 == 0.0 || d2 == 0.0 || d3 == 0.0 || d4 == 0.0) return 0.0;
  const double num = static_cast<double>(tp) * static_cast<double>(tn) -
                     static_cast<double>(fp) * static_cast<double>(fn);
  return num / std::sqrt(d1 * d2 * d3 * d4);
}

MetricsReport compute_metrics(const std::vector<double>& scores,
                              const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("compute_metrics: empty or mismatched input");
  MetricsReport r;
  r.threshold = threshold;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > threshold;
    if (labels[i]) {
      (pred ? r.tp : r.fn)++;
    } else {
      (pred ? r.fp : r.tn)++;
    }
  }
  const int64_t total = r.tp + r.fp + r.tn + r.fn;
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(total);
  r.sensitivity = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.specificity = (r.tn + r.fp) ? static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp) : 0.0;
  r.mcc = mcc(r.tp, r.fp, r.tn, r.fn);
  bool both = false;
  {
    int64_t npos = 0, nneg = 0;
    for (int l : labels) (l ? npos : nneg)++;
    both = npos > 0 && nneg > 0;
  }
  r.roc_auc = both ? roc_auc(scores, labels) : 0.5;
  return r;
}

std::string MetricsReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"tp\": " << tp << ", \"fp\": " << fp << ", \"tn\": " << tn
     << ", \"fn\": " << fn << ", \"accuracy\": " << accuracy
     << ", \"sensitivity\": " << sensitivity
     << ", \"specificity\": " << specificity << ", \"roc_auc\": " << roc_auc
     << ", \"mcc\": " << mcc << ", \"threshold\": " << threshold << "}";
  return os.str();
}

std::vector<std::pair<double, double>> roc_points(
    const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("roc_points: empty or mismatched input");
  int64_t npos = 0, nneg = 0;
  for (int l : labels) (l ? npos : nneg)++;
  if (npos == 0 || nneg == 0)
    throw std::invalid_argument("roc_points: both classes must be present");
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 0.0);
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    for (size_t t = i; t <= j; ++t) (labels[idx[t]] ? tp : fp)++;
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(nneg),
                     static_cast<double>(tp) / static_cast<double>(npos));
    i = j + 1;
  }
  return pts;
}

FoldPlan stratified_kfold(const std::vector<int>& labels,
                          const std::vector<int>& strata, int64_t k,
                          uint64_t seed) {
  if (labels.empty()) throw std::invalid_argument("stratified_kfold: empty labels");
  if (!strata.empty() && strata.size() != labels.size())
    throw std::invalid_argument("stratified_kfold: strata size mismatch");
  if (k < 1) throw std::invalid_argument("stratified_kfold: k must be >= 1");

  // group by (stratum, label); fall back to the label when no strata given
  std::map<std::pair<int, int>, std::vector<int64_t>> groups;
  for (size_t i = 0; i < labels.size(); ++i) {
    const int st = strata.empty() ? labels[i] : strata[i];
    groups[{st, labels[i]}].push_back(static_cast<int64_t>(i));
  }
  for (const auto& [key, members] : groups)
    if (static_cast<int64_t>(members.size()) < k)
      throw std::invalid_argument(
          "stratified_kfold: k exceeds the size of stratum " +
          std::to_string(key.first) + "/label " + std::to_string(key.second));

  FoldPlan plan;
  plan.folds.assign(static_cast<size_t>(k), {});
  Rng rng(seed);
  int64_t start = 0;  // rotate the deal start so remainders spread over folds
  for (auto& [key, members] : groups) {
    for (size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1],
                members[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
    for (size_t i = 0; i < members.size(); ++i)
      plan.folds[static_cast<size_t>((start + static_cast<int64_t>(i)) % k)]
          .push_back(members[i]);
    start = (start + static_cast<int64_t>(members.size())) % k;
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

}  // namespace elnet
