#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "elnet/train.hpp"

namespace elnet {

// Cartesian hyperparameter grid. Empty axes fall back to the base config's
// value for that axis.
struct GridSpec {
  std::vector<double> lr;
  std::vector<NormVariant> norm;
  std::vector<std::array<int64_t, 5>> blur_b;
  std::vector<double> dropout;
  std::vector<uint64_t> seeds;
};

struct GridEntry {
  int64_t index = 0;
  double lr = 0.0;
  NormVariant norm = NormVariant::layer;
  std::array<int64_t, 5> blur_b{5, 5, 5, 5, 5};
  double dropout = 0.5;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when the point aborted
  double val_auc = 0.0;
  double val_mcc = 0.0;
  double final_train_loss = 0.0;
};

struct GridResult {
  std::vector<GridEntry> leaderboard;  // ranked: auc desc, mcc desc, lr asc
  int64_t best = -1;                   // index into leaderboard, -1 if all failed
};

// Trains one model per grid point (in parallel across points when the worker
// budget allows) and ranks them on validation ROC-AUC. A point that throws
// poisons only its own entry.
GridResult grid_search(const ModelConfig& base_model, const TrainConfig& base_train,
                       const GridSpec& grid, const Dataset& train_set,
                       const Dataset& val_set, const StandardScale* scale);

std::string leaderboard_csv(const GridResult& r);

}  // namespace elnet
