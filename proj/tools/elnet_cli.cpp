// Command-line front end: dataset synthesis, training, evaluation,
// cross-validation, grid search, parameter auditing, saliency export.
//
// Exit codes: 0 ok, 2 usage error, 3 I/O error, 4 training divergence,
// 5 self-audit failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "elnet/checkpoint.hpp"
#include "elnet/dataset.hpp"
#include "elnet/errors.hpp"
#include "elnet/gridsearch.hpp"
#include "elnet/metrics.hpp"
#include "elnet/model.hpp"
#include "elnet/parallel.hpp"
#include "elnet/saliency.hpp"
#include "elnet/standardize.hpp"
#include "elnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// run configuration: defaults < JSON config file < command-line flags
// ---------------------------------------------------------------------------

struct RunConfig {
  elnet::ModelConfig model;
  elnet::TrainConfig train;
  elnet::GridSpec grid;
  std::string train_dir;
  std::string val_dir;
  std::string dataset_dir;
  int64_t crossval_k = 5;
  uint64_t crossval_seed = 0;
};

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw elnet::UsageError("config: unknown key '" + key + "' in " + where);
  }
}

std::array<int64_t, 5> parse_blur_b(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 5)
    throw elnet::UsageError("config: " + where + " must be a list of 5 kernel sizes");
  std::array<int64_t, 5> out{};
  for (size_t i = 0; i < 5; ++i) out[i] = j[i].get<int64_t>();
  return out;
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw elnet::IoError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw elnet::UsageError("config: malformed JSON in " + path + ": " + e.what());
  }
  reject_unknown_keys(j, {"model", "train", "data", "grid", "crossval"}, "top level");

  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown_keys(m, {"k", "norm", "pool", "blur_b", "dropout",
                            "input_size", "seed", "stages"}, "model");
    if (m.contains("k")) cfg.model.k = m["k"].get<int64_t>();
    if (m.contains("norm"))
      cfg.model.norm = elnet::norm_variant_from_string(m["norm"].get<std::string>());
    if (m.contains("pool"))
      cfg.model.pool = elnet::pool_variant_from_string(m["pool"].get<std::string>());
    if (m.contains("blur_b")) cfg.model.blur_b = parse_blur_b(m["blur_b"], "model.blur_b");
    if (m.contains("dropout")) cfg.model.dropout_rate = m["dropout"].get<double>();
    if (m.contains("input_size")) {
      const auto& s = m["input_size"];
      if (!s.is_array() || s.size() != 2)
        throw elnet::UsageError("config: model.input_size must be [H, W]");
      cfg.model.input_h = s[0].get<int64_t>();
      cfg.model.input_w = s[1].get<int64_t>();
    }
    if (m.contains("seed")) cfg.model.seed = m["seed"].get<uint64_t>();
    if (m.contains("stages")) cfg.model.stages = m["stages"].get<int64_t>();
  }

  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown_keys(t, {"optimizer", "lr", "beta1", "beta2", "eps", "momentum",
                            "epochs", "master_seed", "oversample", "augment",
                            "standardize", "pathology", "orientation", "threshold"},
                        "train");
    if (t.contains("optimizer"))
      cfg.train.optimizer.kind = elnet::optimizer_from_string(t["optimizer"].get<std::string>());
    if (t.contains("lr")) cfg.train.optimizer.lr = t["lr"].get<double>();
    if (t.contains("beta1")) cfg.train.optimizer.beta1 = t["beta1"].get<double>();
    if (t.contains("beta2")) cfg.train.optimizer.beta2 = t["beta2"].get<double>();
    if (t.contains("eps")) cfg.train.optimizer.eps = t["eps"].get<double>();
    if (t.contains("momentum")) cfg.train.optimizer.momentum = t["momentum"].get<double>();
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int64_t>();
    if (t.contains("master_seed")) cfg.train.master_seed = t["master_seed"].get<uint64_t>();
    if (t.contains("oversample")) cfg.train.oversample = t["oversample"].get<bool>();
    if (t.contains("augment")) cfg.train.augment_enabled = t["augment"].get<bool>();
    if (t.contains("standardize")) cfg.train.standardize = t["standardize"].get<bool>();
    if (t.contains("pathology")) cfg.train.pathology = t["pathology"].get<std::string>();
    if (t.contains("orientation"))
      cfg.train.orientation = elnet::orientation_from_string(t["orientation"].get<std::string>());
    if (t.contains("threshold")) cfg.train.threshold = t["threshold"].get<double>();
  }

  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown_keys(d, {"train_dir", "val_dir", "dataset_dir"}, "data");
    if (d.contains("train_dir")) cfg.train_dir = d["train_dir"].get<std::string>();
    if (d.contains("val_dir")) cfg.val_dir = d["val_dir"].get<std::string>();
    if (d.contains("dataset_dir")) cfg.dataset_dir = d["dataset_dir"].get<std::string>();
  }

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    reject_unknown_keys(g, {"lr", "norm", "blur_b", "dropout", "seeds"}, "grid");
    if (g.contains("lr"))
      for (const auto& v : g["lr"]) cfg.grid.lr.push_back(v.get<double>());
    if (g.contains("norm"))
      for (const auto& v : g["norm"])
        cfg.grid.norm.push_back(elnet::norm_variant_from_string(v.get<std::string>()));
    if (g.contains("blur_b"))
      for (const auto& v : g["blur_b"])
        cfg.grid.blur_b.push_back(parse_blur_b(v, "grid.blur_b"));
    if (g.contains("dropout"))
      for (const auto& v : g["dropout"]) cfg.grid.dropout.push_back(v.get<double>());
    if (g.contains("seeds"))
      for (const auto& v : g["seeds"]) cfg.grid.seeds.push_back(v.get<uint64_t>());
  }

  if (j.contains("crossval")) {
    const auto& c = j["crossval"];
    reject_unknown_keys(c, {"k", "seed"}, "crossval");
    if (c.contains("k")) cfg.crossval_k = c["k"].get<int64_t>();
    if (c.contains("seed")) cfg.crossval_seed = c["seed"].get<uint64_t>();
  }
}

ordered_json resolved_json(const RunConfig& cfg) {
  ordered_json j;
  j["model"] = {{"k", cfg.model.k},
                {"norm", elnet::to_string(cfg.model.norm)},
                {"pool", elnet::to_string(cfg.model.pool)},
                {"blur_b", cfg.model.blur_b},
                {"dropout", cfg.model.dropout_rate},
                {"input_size", {cfg.model.input_h, cfg.model.input_w}},
                {"seed", cfg.model.seed},
                {"stages", cfg.model.stages}};
  j["train"] = {{"optimizer", elnet::to_string(cfg.train.optimizer.kind)},
                {"lr", cfg.train.optimizer.lr},
                {"beta1", cfg.train.optimizer.beta1},
                {"beta2", cfg.train.optimizer.beta2},
                {"eps", cfg.train.optimizer.eps},
                {"momentum", cfg.train.optimizer.momentum},
                {"epochs", cfg.train.epochs},
                {"master_seed", cfg.train.master_seed},
                {"oversample", cfg.train.oversample},
                {"augment", cfg.train.augment_enabled},
                {"standardize", cfg.train.standardize},
                {"pathology", cfg.train.pathology},
                {"orientation", elnet::to_string(cfg.train.orientation)},
                {"threshold", cfg.train.threshold}};
  j["data"] = {{"train_dir", cfg.train_dir},
               {"val_dir", cfg.val_dir},
               {"dataset_dir", cfg.dataset_dir}};
  j["crossval"] = {{"k", cfg.crossval_k}, {"seed", cfg.crossval_seed}};
  return j;
}

std::string default_run_root() {
  const char* env = std::getenv("ELNET_RUN_ROOT");
  return env && *env ? env : "runs";
}

fs::path prepare_out_dir(const std::string& out, const std::string& command) {
  fs::path dir = out.empty() ? fs::path(default_run_root()) / command : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw elnet::IoError("cannot create run directory " + dir.string() + ": " +
                         ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw elnet::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw elnet::IoError("write failed for " + path.string());
}

void write_scale(const fs::path& path, const elnet::StandardScale& scale) {
  ordered_json j;
  j["percentiles"] = scale.percentiles;
  j["landmarks"] = scale.landmarks;
  write_text(path, j.dump(2) + "\n");
}

elnet::StandardScale read_scale(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw elnet::IoError("scale: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw elnet::IoError("scale: malformed JSON in " + path + ": " + e.what());
  }
  elnet::StandardScale s;
  for (const auto& v : j.at("percentiles")) s.percentiles.push_back(v.get<double>());
  for (const auto& v : j.at("landmarks")) s.landmarks.push_back(v.get<double>());
  return s;
}

void write_roc_csv(const fs::path& path, const std::vector<double>& scores,
                   const std::vector<int>& labels) {
  std::string text = "fpr,tpr\n";
  char buf[80];
  for (const auto& [fpr, tpr] : elnet::roc_points(scores, labels)) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", fpr, tpr);
    text += buf;
  }
  write_text(path, text);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_synth(int64_t n, int64_t slices, int64_t size, double lesion_rate,
              uint64_t seed, const std::string& out) {
  if (n < 1) throw elnet::UsageError("synth: --n must be >= 1");
  if (slices < 1 || size < 4) throw elnet::UsageError("synth: bad --slices/--size");
  if (lesion_rate < 0.0 || lesion_rate > 1.0)
    throw elnet::UsageError("synth: --lesion-rate must be in [0, 1]");
  const fs::path dir = prepare_out_dir(out, "synth");
  elnet::SynthSpec spec;
  spec.n = n;
  spec.slices = slices;
  spec.height = spec.width = size;
  spec.lesion_rate = lesion_rate;
  spec.seed = seed;
  elnet::write_synth_dataset(dir.string(), spec);
  std::cout << "synth: wrote " << n << " volumes to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out) {
  if (cfg.train_dir.empty()) throw elnet::UsageError("train: data.train_dir is required");
  const fs::path dir = prepare_out_dir(out, "train");
  write_text(dir / "resolved.json", resolved_json(cfg).dump(2) + "\n");

  auto train_set = elnet::load_dataset(cfg.train_dir, cfg.train.pathology,
                                       cfg.train.orientation);
  elnet::Dataset val_set;
  if (!cfg.val_dir.empty())
    val_set = elnet::load_dataset(cfg.val_dir, cfg.train.pathology,
                                  cfg.train.orientation);

  std::optional<elnet::StandardScale> scale;
  if (cfg.train.standardize) {
    scale = elnet::learn_standard_scale(train_set.volumes);
    write_scale(dir / "scale.json", *scale);
  }

  auto model = elnet::build_elnet<float>(cfg.model);
  std::cout << "train: " << train_set.size() << " exams, "
            << model.parameter_count() << " parameters\n";
  auto history = elnet::train(model, train_set, val_set, cfg.train,
                              scale ? &*scale : nullptr);
  for (const auto& e : history)
    std::printf("epoch %3lld  loss %.5f  val_auc %.4f\n",
                static_cast<long long>(e.epoch), e.train_loss, e.val.roc_auc);

  write_text(dir / "history.csv", elnet::history_csv(history));
  elnet::save_checkpoint(model, (dir / "checkpoint.ckpt").string());
  if (!history.empty() && !val_set.volumes.empty())
    write_text(dir / "metrics.json", history.back().val.to_json() + "\n");
  std::cout << "train: artifacts in " << dir.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& data_dir, const std::string& scale_path,
             const std::string& out) {
  if (checkpoint.empty() || data_dir.empty())
    throw elnet::UsageError("eval: --checkpoint and --data are required");
  const fs::path dir = prepare_out_dir(out, "eval");
  auto model = elnet::load_checkpoint(checkpoint);
  auto ds = elnet::load_dataset(data_dir, cfg.train.pathology, cfg.train.orientation);

  std::optional<elnet::StandardScale> scale;
  if (cfg.train.standardize) {
    // the training-set scale when provided, else learned from this dataset
    scale = scale_path.empty() ? elnet::learn_standard_scale(ds.volumes)
                               : read_scale(scale_path);
  }

  std::vector<elnet::Volume> pre(ds.size());
  elnet::parallel_for(static_cast<int64_t>(ds.size()), [&](int64_t i) {
    pre[static_cast<size_t>(i)] = elnet::preprocess_volume(
        ds.volumes[static_cast<size_t>(i)], scale ? &*scale : nullptr,
        model.cfg.input_h, model.cfg.input_w);
  });
  auto scores = elnet::score_dataset(model, pre);
  auto report = elnet::compute_metrics(scores, ds.labels, cfg.train.threshold);
  write_text(dir / "metrics.json", report.to_json() + "\n");
  {
    std::string text = "exam_id,label,score\n";
    char buf[96];
    for (size_t i = 0; i < scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.9g\n",
                    ds.volumes[i].exam_id.c_str(), ds.labels[i], scores[i]);
      text += buf;
    }
    write_text(dir / "scores.csv", text);
  }
  bool both_classes = false;
  {
    int64_t pos = 0, neg = 0;
    for (int l : ds.labels) (l ? pos : neg)++;
    both_classes = pos > 0 && neg > 0;
  }
  if (both_classes) write_roc_csv(dir / "roc.csv", scores, ds.labels);
  std::printf("eval: auc %.4f acc %.4f mcc %.4f -> %s\n", report.roc_auc,
              report.accuracy, report.mcc, dir.string().c_str());
  return 0;
}

int cmd_crossval(const RunConfig& cfg, const std::string& out) {
  if (cfg.dataset_dir.empty())
    throw elnet::UsageError("crossval: data.dataset_dir is required");
  const fs::path dir = prepare_out_dir(out, "crossval");
  write_text(dir / "resolved.json", resolved_json(cfg).dump(2) + "\n");

  auto ds = elnet::load_dataset(cfg.dataset_dir, cfg.train.pathology,
                                cfg.train.orientation);
  auto plan = elnet::stratified_kfold(ds.labels, {}, cfg.crossval_k, cfg.crossval_seed);

  std::string summary = "fold,auc,mcc,accuracy,sensitivity,specificity\n";
  double sum_auc = 0, sum_mcc = 0, sum_acc = 0, sum_sens = 0, sum_spec = 0;
  char buf[160];
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    std::vector<char> in_fold(ds.size(), 0);
    for (int64_t i : plan.folds[f]) in_fold[static_cast<size_t>(i)] = 1;
    elnet::Dataset tr, va;
    tr.pathology = va.pathology = ds.pathology;
    for (size_t i = 0; i < ds.size(); ++i) {
      auto& dst = in_fold[i] ? va : tr;
      dst.volumes.push_back(ds.volumes[i]);
      dst.labels.push_back(ds.labels[i]);
      dst.lesion_ranges.push_back(ds.lesion_ranges[i]);
    }
    std::optional<elnet::StandardScale> scale;
    if (cfg.train.standardize) scale = elnet::learn_standard_scale(tr.volumes);

    elnet::ModelConfig mc = cfg.model;
    mc.seed = elnet::mix_seed(cfg.model.seed, static_cast<uint64_t>(f));
    elnet::TrainConfig tc = cfg.train;
    tc.master_seed = elnet::mix_seed(cfg.train.master_seed, static_cast<uint64_t>(f));
    auto model = elnet::build_elnet<float>(mc);
    auto history = elnet::train(model, tr, va, tc, scale ? &*scale : nullptr);
    const auto& rep = history.back().val;

    write_text(dir / ("fold_" + std::to_string(f) + "_metrics.json"),
               rep.to_json() + "\n");
    std::vector<elnet::Volume> pre(va.size());
    for (size_t i = 0; i < va.size(); ++i)
      pre[i] = elnet::preprocess_volume(va.volumes[i], scale ? &*scale : nullptr,
                                        mc.input_h, mc.input_w);
    write_roc_csv(dir / ("roc_fold_" + std::to_string(f) + ".csv"),
                  elnet::score_dataset(model, pre), va.labels);

    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", f,
                  rep.roc_auc, rep.mcc, rep.accuracy, rep.sensitivity,
                  rep.specificity);
    summary += buf;
    sum_auc += rep.roc_auc;
    sum_mcc += rep.mcc;
    sum_acc += rep.accuracy;
    sum_sens += rep.sensitivity;
    sum_spec += rep.specificity;
    std::printf("fold %zu: auc %.4f mcc %.4f\n", f, rep.roc_auc, rep.mcc);
  }
  const double k = static_cast<double>(plan.folds.size());
  std::snprintf(buf, sizeof(buf), "mean,%.9g,%.9g,%.9g,%.9g,%.9g\n", sum_auc / k,
                sum_mcc / k, sum_acc / k, sum_sens / k, sum_spec / k);
  summary += buf;
  write_text(dir / "crossval_summary.csv", summary);
  std::cout << "crossval: summary in " << dir.string() << "\n";
  return 0;
}

int cmd_grid(const RunConfig& cfg, const std::string& out) {
  if (cfg.train_dir.empty() || cfg.val_dir.empty())
    throw elnet::UsageError("grid: data.train_dir and data.val_dir are required");
  const fs::path dir = prepare_out_dir(out, "grid");
  write_text(dir / "resolved.json", resolved_json(cfg).dump(2) + "\n");

  auto train_set = elnet::load_dataset(cfg.train_dir, cfg.train.pathology,
                                       cfg.train.orientation);
  auto val_set = elnet::load_dataset(cfg.val_dir, cfg.train.pathology,
                                     cfg.train.orientation);
  std::optional<elnet::StandardScale> scale;
  if (cfg.train.standardize) {
    scale = elnet::learn_standard_scale(train_set.volumes);
    write_scale(dir / "scale.json", *scale);
  }

  auto result = elnet::grid_search(cfg.model, cfg.train, cfg.grid, train_set,
                                   val_set, scale ? &*scale : nullptr);
  write_text(dir / "leaderboard.csv", elnet::leaderboard_csv(result));
  if (result.best < 0) {
    std::cerr << "grid: every grid point failed\n";
    return 4;
  }
  const auto& best = result.leaderboard[static_cast<size_t>(result.best)];
  RunConfig best_cfg = cfg;
  best_cfg.model.norm = best.norm;
  best_cfg.model.blur_b = best.blur_b;
  best_cfg.model.dropout_rate = best.dropout;
  best_cfg.model.seed = best.seed;
  best_cfg.train.optimizer.lr = best.lr;
  write_text(dir / "best_config.json", resolved_json(best_cfg).dump(2) + "\n");
  std::printf("grid: best auc %.4f (lr %.3g, norm %s, seed %llu)\n", best.val_auc,
              best.lr, elnet::to_string(best.norm),
              static_cast<unsigned long long>(best.seed));
  return 0;
}

int cmd_params(int64_t k) {
  if (k < 1) throw elnet::UsageError("params: --k must be >= 1");
  elnet::ModelConfig cfg;
  cfg.k = k;
  auto model = elnet::build_elnet<float>(cfg, /*requires_grad=*/false);
  int64_t total = 0;
  std::printf("%-24s %12s\n", "layer", "parameters");
  for (const auto& row : elnet::param_audit(model)) {
    std::printf("%-24s %12lld\n", row.label.c_str(),
                static_cast<long long>(row.count));
    total += row.count;
  }
  const int64_t enumerated = model.parameter_count();
  const int64_t closed = elnet::param_count_closed_form(k);
  std::printf("%-24s %12lld\n", "total (enumerated)",
              static_cast<long long>(enumerated));
  std::printf("%-24s %12lld\n", "total (closed form)",
              static_cast<long long>(closed));
  if (total != enumerated || enumerated != closed)
    throw elnet::AuditError("params: enumeration does not match the closed form");
  return 0;
}

int cmd_saliency(const RunConfig& cfg, const std::string& checkpoint,
                 const std::string& volume_path, int64_t target_class,
                 const std::string& scale_path, const std::string& out) {
  if (checkpoint.empty() || volume_path.empty())
    throw elnet::UsageError("saliency: --checkpoint and --volume are required");
  if (target_class < 0 || target_class > 1)
    throw elnet::UsageError("saliency: --class must be 0 or 1");
  const fs::path dir = prepare_out_dir(out, "saliency");
  auto model = elnet::load_checkpoint(checkpoint);
  auto volume = elnet::read_volume(volume_path);

  std::optional<elnet::StandardScale> scale;
  if (cfg.train.standardize && !scale_path.empty()) scale = read_scale(scale_path);
  elnet::Volume pre = elnet::preprocess_volume(
      volume, scale ? &*scale : nullptr, model.cfg.input_h, model.cfg.input_w);
  if (!scale && cfg.train.standardize) {
    // no training scale available: rescale to [0, 1] by the volume's own range
    float lo = pre.data[0], hi = pre.data[0];
    for (float v : pre.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo)
      for (float& v : pre.data) v = (v - lo) / (hi - lo);
  }

  auto heat = elnet::fullgrad(model, pre.to_tensor(), target_class);
  elnet::write_heatmap_files(heat, target_class, dir.string());
  std::printf("saliency: %lld slices, most informative %lld -> %s\n",
              static_cast<long long>(heat.s),
              static_cast<long long>(elnet::most_informative_slice(heat)),
              dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elnet: multi-slice volumetric classifier"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "worker threads (1 = bitwise reproducible)");

  std::string config_path, out_dir;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int64_t n = 100, slices = 8, size = 128;
  double lesion_rate = 0.5;
  uint64_t synth_seed = 0;
  synth->add_option("--n", n, "number of exams");
  synth->add_option("--slices", slices, "slices per exam");
  synth->add_option("--size", size, "slice height/width");
  synth->add_option("--lesion-rate", lesion_rate, "positive-class probability");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", out_dir, "output directory");

  // shared model/train overrides
  RunConfig cfg;
  auto add_common = [&](CLI::App* cmd, bool with_train) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "run directory");
    cmd->add_option("--k", cfg.model.k, "width factor K");
    cmd->add_option("--norm",
                    [&cfg](const std::vector<std::string>& v) {
                      cfg.model.norm = elnet::norm_variant_from_string(v[0]);
                      return true;
                    },
                    "normalization variant: layer|contrast|batch");
    cmd->add_option("--pool",
                    [&cfg](const std::vector<std::string>& v) {
                      cfg.model.pool = elnet::pool_variant_from_string(v[0]);
                      return true;
                    },
                    "pooling variant: blurpool|maxpool");
    cmd->add_option("--blur-b",
                    [&cfg](const std::vector<std::string>& v) {
                      const int64_t b = std::stoll(v[0]);
                      cfg.model.blur_b = {b, b, b, b, b};
                      return true;
                    },
                    "blur kernel size for every stage");
    cmd->add_option("--dropout", cfg.model.dropout_rate, "dropout rate");
    cmd->add_option("--input-size",
                    [&cfg](const std::vector<std::string>& v) {
                      cfg.model.input_h = cfg.model.input_w = std::stoll(v[0]);
                      return true;
                    },
                    "square input size");
    cmd->add_option("--seed", cfg.model.seed, "weight init seed");
    if (with_train) {
      cmd->add_option("--optimizer",
                      [&cfg](const std::vector<std::string>& v) {
                        cfg.train.optimizer.kind = elnet::optimizer_from_string(v[0]);
                        return true;
                      },
                      "adam|sgd_momentum");
      cmd->add_option("--lr", cfg.train.optimizer.lr, "learning rate");
      cmd->add_option("--epochs", cfg.train.epochs, "training epochs");
      cmd->add_option("--master-seed", cfg.train.master_seed, "training seed");
      cmd->add_flag("--no-oversample",
                    [&cfg](int64_t) { cfg.train.oversample = false; },
                    "disable minority oversampling");
      cmd->add_flag("--no-augment",
                    [&cfg](int64_t) { cfg.train.augment_enabled = false; },
                    "disable augmentation");
      cmd->add_flag("--no-standardize",
                    [&cfg](int64_t) { cfg.train.standardize = false; },
                    "disable intensity standardization");
      cmd->add_option("--pathology", cfg.train.pathology, "label column to train on");
      cmd->add_option("--orientation",
                      [&cfg](const std::vector<std::string>& v) {
                        cfg.train.orientation = elnet::orientation_from_string(v[0]);
                        return true;
                      },
                      "axial|coronal|sagittal");
    }
  };

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, true);
  train_cmd->add_option("--train-dir", cfg.train_dir, "training dataset directory");
  train_cmd->add_option("--val-dir", cfg.val_dir, "validation dataset directory");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint_path, data_dir, scale_path;
  eval_cmd->add_option("--config", config_path, "JSON config file");
  eval_cmd->add_option("--out", out_dir, "run directory");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  eval_cmd->add_option("--data", data_dir, "dataset directory");
  eval_cmd->add_option("--scale", scale_path, "training scale.json");
  eval_cmd->add_option("--pathology", cfg.train.pathology, "label column");
  eval_cmd->add_option("--orientation",
                       [&cfg](const std::vector<std::string>& v) {
                         cfg.train.orientation = elnet::orientation_from_string(v[0]);
                         return true;
                       },
                       "axial|coronal|sagittal");
  eval_cmd->add_flag("--no-standardize",
                     [&cfg](int64_t) { cfg.train.standardize = false; },
                     "disable intensity standardization");
  eval_cmd->add_option("--threshold", cfg.train.threshold, "decision threshold");

  auto* crossval_cmd = app.add_subcommand("crossval", "stratified k-fold cross-validation");
  add_common(crossval_cmd, true);
  crossval_cmd->add_option("--data", cfg.dataset_dir, "dataset directory");
  crossval_cmd->add_option("--folds", cfg.crossval_k, "fold count");
  crossval_cmd->add_option("--fold-seed", cfg.crossval_seed, "fold split seed");

  auto* grid_cmd = app.add_subcommand("grid", "hyperparameter grid search");
  add_common(grid_cmd, true);
  grid_cmd->add_option("--train-dir", cfg.train_dir, "training dataset directory");
  grid_cmd->add_option("--val-dir", cfg.val_dir, "validation dataset directory");

  auto* params_cmd = app.add_subcommand("params", "parameter-count audit");
  int64_t params_k = 1;
  params_cmd->add_option("--k", params_k, "width factor K");

  auto* saliency_cmd = app.add_subcommand("saliency", "export saliency heat-maps");
  std::string volume_path;
  int64_t target_class = 1;
  saliency_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  saliency_cmd->add_option("--volume", volume_path, "volume .npy file");
  saliency_cmd->add_option("--class", target_class, "target class (0 or 1)");
  saliency_cmd->add_option("--scale", scale_path, "training scale.json");
  saliency_cmd->add_option("--out", out_dir, "output directory");
  saliency_cmd->add_flag("--no-standardize",
                         [&cfg](int64_t) { cfg.train.standardize = false; },
                         "feed the raw volume");

  // precedence: defaults < config file < flags. The config file is located by
  // a pre-scan and loaded into cfg before CLI11 writes the flag values on top.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        load_config_file(cfg, argv[i + 1]);
        break;
      }
      if (arg.rfind("--config=", 0) == 0) {
        load_config_file(cfg, arg.substr(9));
        break;
      }
    }
  } catch (const elnet::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const elnet::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    elnet::set_num_threads(threads);

    if (synth->parsed())
      return cmd_synth(n, slices, size, lesion_rate, synth_seed, out_dir);
    if (train_cmd->parsed()) return cmd_train(cfg, out_dir);
    if (eval_cmd->parsed())
      return cmd_eval(cfg, checkpoint_path, data_dir, scale_path, out_dir);
    if (crossval_cmd->parsed()) return cmd_crossval(cfg, out_dir);
    if (grid_cmd->parsed()) return cmd_grid(cfg, out_dir);
    if (params_cmd->parsed()) return cmd_params(params_k);
    if (saliency_cmd->parsed())
      return cmd_saliency(cfg, checkpoint_path, volume_path, target_class,
                          scale_path, out_dir);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    return 2;
  } catch (const elnet::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const elnet::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const elnet::AuditError& e) {
    std::cerr << "audit failure: " << e.what() << "\n";
    return 5;
  } catch (const elnet::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
