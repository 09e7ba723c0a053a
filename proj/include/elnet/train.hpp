#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elnet/augment.hpp"
#include "elnet/dataset.hpp"
#include "elnet/metrics.hpp"
#include "elnet/model.hpp"
#include "elnet/optimizer.hpp"
#include "elnet/standardize.hpp"

namespace elnet {

struct TrainConfig {
  OptimizerConfig optimizer;
  int64_t epochs = 10;
  uint64_t master_seed = 0;
  bool oversample = true;
  bool augment_enabled = true;
  bool standardize = true;
  AugmentSpec augment;
  std::string pathology = "lesion";
  Orientation orientation = Orientation::axial;
  double threshold = 0.5;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (optimizer.lr < 0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  }
};

struct EpochStats {
  int64_t epoch = 0;       // 1-based
  double train_loss = 0.0; // mean over steps
  MetricsReport val;
};

using History = std::vector<EpochStats>;

// standardize + resize, the deterministic part of the per-exam pipeline
Volume preprocess_volume(const Volume& v, const StandardScale* scale,
                         int64_t target_h, int64_t target_w);

// scores = positive-class probabilities of already-preprocessed volumes
std::vector<double> score_dataset(ModelF& model, const std::vector<Volume>& volumes);

MetricsReport evaluate(ModelF& model, const std::vector<Volume>& preprocessed,
                       const std::vector<int>& labels, double threshold = 0.5);

// Full training loop. Per-step pipeline: oversample -> augment ->
// standardize-resize -> forward -> cross-entropy -> backward -> optimizer
// step, one exam per step with the slice axis as the intra-exam batch.
// Fully reproducible given (master_seed, configs). Throws DivergenceError
// when the loss goes non-finite.
History train(ModelF& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg, const StandardScale* scale);

std::string history_csv(const History& h);

}  // namespace elnet
