#include "elnet/gridsearch.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "elnet/parallel.hpp"

namespace elnet {

GridResult grid_search(const ModelConfig& base_model, const TrainConfig& base_train,
                       const GridSpec& grid, const Dataset& train_set,
                       const Dataset& val_set, const StandardScale* scale) {
  const std::vector<double> lrs = grid.lr.empty()
                                      ? std::vector<double>{base_train.optimizer.lr}
                                      : grid.lr;
  const std::vector<NormVariant> norms =
      grid.norm.empty() ? std::vector<NormVariant>{base_model.norm} : grid.norm;
  const std::vector<std::array<int64_t, 5>> blurs =
      grid.blur_b.empty() ? std::vector<std::array<int64_t, 5>>{base_model.blur_b}
                          : grid.blur_b;
  const std::vector<double> drops =
      grid.dropout.empty() ? std::vector<double>{base_model.dropout_rate}
                           : grid.dropout;
  const std::vector<uint64_t> seeds =
      grid.seeds.empty() ? std::vector<uint64_t>{base_model.seed} : grid.seeds;

  std::vector<GridEntry> entries;
  for (double lr : lrs)
    for (NormVariant nv : norms)
      for (const auto& bb : blurs)
        for (double dr : drops)
          for (uint64_t sd : seeds) {
            GridEntry e;
            e.index = static_cast<int64_t>(entries.size());
            e.lr = lr;
            e.norm = nv;
            e.blur_b = bb;
            e.dropout = dr;
            e.seed = sd;
            entries.push_back(e);
          }
  if (entries.empty()) throw std::invalid_argument("grid_search: empty grid");

  std::vector<GridEntry> results = entries;
  auto run_point = [&](int64_t i) {
    GridEntry& e = results[static_cast<size_t>(i)];
    try {
      ModelConfig mc = base_model;
      mc.norm = e.norm;
      mc.blur_b = e.blur_b;
      mc.dropout_rate = e.dropout;
      mc.seed = e.seed;
      TrainConfig tc = base_train;
      tc.optimizer.lr = e.lr;
      tc.master_seed = mix_seed(base_train.master_seed, static_cast<uint64_t>(e.index));
      ModelF model = build_elnet<float>(mc);
      History h = train(model, train_set, val_set, tc, scale);
      e.ok = true;
      e.val_auc = h.back().val.roc_auc;
      e.val_mcc = h.back().val.mcc;
      e.final_train_loss = h.back().train_loss;
    } catch (const std::exception& ex) {
      e.ok = false;
      e.error = ex.what();
    }
  };
  // Points run in parallel, one model per worker; training inside a spawned
  // worker stays sequential (fresh threads start with a budget of 1).
  parallel_for(static_cast<int64_t>(results.size()), run_point);

  GridResult out;
  out.leaderboard = std::move(results);
  std::stable_sort(out.leaderboard.begin(), out.leaderboard.end(),
                   [](const GridEntry& a, const GridEntry& b) {
                     if (a.ok != b.ok) return a.ok;
                     if (a.val_auc != b.val_auc) return a.val_auc > b.val_auc;
                     if (a.val_mcc != b.val_mcc) return a.val_mcc > b.val_mcc;
                     if (a.lr != b.lr) return a.lr < b.lr;
                     return a.index < b.index;
                   });
  out.best = (!out.leaderboard.empty() && out.leaderboard.front().ok) ? 0 : -1;
  return out;
}

std::string leaderboard_csv(const GridResult& r) {
  std::ostringstream os;
  os << "rank,lr,norm,blur_b,dropout,seed,val_auc,val_mcc,final_train_loss,status\n";
  char buf[64];
  int64_t rank = 1;
  for (const auto& e : r.leaderboard) {
    std::snprintf(buf, sizeof(buf), "%.9g", e.lr);
    os << rank++ << "," << buf << "," << to_string(e.norm) << ",";
    for (size_t i = 0; i < e.blur_b.size(); ++i) os << (i ? "|" : "") << e.blur_b[i];
    std::snprintf(buf, sizeof(buf), "%.9g", e.dropout);
    os << "," << buf << "," << e.seed << ",";
    std::snprintf(buf, sizeof(buf), "%.9g", e.val_auc);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.9g", e.val_mcc);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.9g", e.final_train_loss);
    os << buf << "," << (e.ok ? "ok" : ("failed: " + e.error)) << "\n";
  }
  return os.str();
}

}  // namespace elnet
