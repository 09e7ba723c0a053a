#include "elnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "elnet/errors.hpp"
#include "elnet/parallel.hpp"
#include "elnet/rng.hpp"

namespace elnet {

Volume preprocess_volume(const Volume& v, const StandardScale* scale,
                         int64_t target_h, int64_t target_w) {
  Volume out = scale ? apply_standardization(v, *scale) : v;
  return resize_volume(out, target_h, target_w);
}

std::vector<double> score_dataset(ModelF& model,
                                  const std::vector<Volume>& volumes) {
  std::vector<double> scores(volumes.size(), 0.0);
  NoGradGuard ng;
  for (size_t i = 0; i < volumes.size(); ++i) {
    auto r = model.forward(volumes[i].to_tensor(), /*train=*/false);
    scores[i] = static_cast<double>(r.probs.values()[1]);
  }
  return scores;
}

MetricsReport evaluate(ModelF& model, const std::vector<Volume>& preprocessed,
                       const std::vector<int>& labels, double threshold) {
  if (preprocessed.empty())
    throw std::invalid_argument("evaluate: empty dataset");
  return compute_metrics(score_dataset(model, preprocessed), labels, threshold);
}

History train(ModelF& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg, const StandardScale* scale) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty dataset");
  const StandardScale* used_scale = cfg.standardize ? scale : nullptr;
  if (cfg.standardize && !scale)
    throw std::invalid_argument("train: standardization requested without a scale");

  // validation volumes see no augmentation; preprocess them once
  std::vector<Volume> val_pre(val_set.size());
  parallel_for(static_cast<int64_t>(val_set.size()), [&](int64_t i) {
    val_pre[static_cast<size_t>(i)] =
        preprocess_volume(val_set.volumes[static_cast<size_t>(i)], used_scale,
                          model.cfg.input_h, model.cfg.input_w);
  });

  auto named_params = model.parameters();
  std::vector<TensorF> params;
  for (auto& [name, t] : named_params) params.push_back(t);
  Optimizer<float> opt(cfg.optimizer);

  History history;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int64_t> order;
    if (cfg.oversample) {
      order = oversample_indices(train_set.labels,
                                 mix_seed(cfg.master_seed, 0x05e5, static_cast<uint64_t>(epoch)));
    } else {
      order.resize(train_set.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    }
    Rng shuffle_rng(mix_seed(cfg.master_seed, 0x50f1e, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int64_t>(i)))]);

    double loss_sum = 0.0;
    for (size_t step = 0; step < order.size(); ++step) {
      const int64_t idx = order[step];
      Volume vol = train_set.volumes[static_cast<size_t>(idx)];
      if (cfg.augment_enabled) {
        AugmentSpec sp = cfg.augment;
        sp.seed = mix_seed(cfg.master_seed,
                           0xa06u ^ static_cast<uint64_t>(epoch) << 20,
                           static_cast<uint64_t>(step));
        vol = augment(vol, sp);
      }
      vol = preprocess_volume(vol, used_scale, model.cfg.input_h, model.cfg.input_w);

      model.zero_grad();
      const uint64_t drop_seed =
          mix_seed(cfg.master_seed, 0xd209u ^ static_cast<uint64_t>(epoch) << 20,
                   static_cast<uint64_t>(step));
      auto r = model.forward(vol.to_tensor(), /*train=*/true, drop_seed);
      auto loss = cross_entropy(r.probs, train_set.labels[static_cast<size_t>(idx)]);
      const double loss_v = static_cast<double>(loss.scalar());
      if (!std::isfinite(loss_v))
        throw DivergenceError("train: non-finite loss at epoch " +
                              std::to_string(epoch) + " step " +
                              std::to_string(step));
      loss_sum += loss_v;
      backward(loss);
      opt.step(params);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_pre.empty())
      st.val = evaluate(model, val_pre, val_set.labels, cfg.threshold);
    history.push_back(st);
  }
  return history;
}

std::string history_csv(const History& h) {
  std::ostringstream os;
  os << "epoch,train_loss,val_auc,val_mcc,val_accuracy,val_sensitivity,val_specificity\n";
  char buf[64];
  for (const auto& e : h) {
    os << e.epoch;
    const double cols[6] = {e.train_loss,      e.val.roc_auc,
                            e.val.mcc,         e.val.accuracy,
                            e.val.sensitivity, e.val.specificity};
    for (double c : cols) {
      std::snprintf(buf, sizeof(buf), "%.9g", c);
      os << "," << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace elnet
