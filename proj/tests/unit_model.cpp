#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "elnet/checkpoint.hpp"
#include "elnet/model.hpp"

using namespace elnet;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
  auto p = fs::temp_directory_path() / "elnet_model_tests";
  fs::create_directories(p);
  return p.string();
}

}  // namespace

TEST_SUITE("parameter counts") {
  TEST_CASE("enumeration equals the closed form for K in 1..8") {
    for (int64_t k = 1; k <= 8; ++k) {
      ModelConfig cfg;
      cfg.k = k;
      auto m = build_elnet<float>(cfg, /*requires_grad=*/false);
      CHECK(m.parameter_count() == param_count_closed_form(k));
    }
  }

  TEST_CASE("published counts for K=2 and K=4") {
    CHECK(param_count_closed_form(2) == 53178);
    CHECK(param_count_closed_form(4) == 211314);
    CHECK(param_count_closed_form(1) == 13470);
    CHECK(param_count_closed_form(3) == 119126);
  }

  TEST_CASE("per-row subtotals match the per-layer formulas") {
    for (int64_t k = 1; k <= 4; ++k) {
      ModelConfig cfg;
      cfg.k = k;
      auto m = build_elnet<float>(cfg, false);
      auto rows = param_audit(m);
      REQUIRE(rows.size() == 11);
      const int64_t expect[] = {
          196 * k,                 // stem conv 7x7
          8 * k,                   // stem norm (gamma + beta)
          800 * k * k + 16 * k,    // stage1 blocks
          800 * k * k,             // stage1 raise
          1152 * k * k + 32 * k,   // stage2 blocks
          1152 * k * k,            // stage2 raise
          2304 * k * k + 32 * k,   // stage3 block
          2304 * k * k,            // stage3 conv
          2304 * k * k + 32 * k,   // stage4 block
          2304 * k * k,            // stage4 conv
          32 * k + 2,              // head
      };
      for (size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].count == expect[i]);
    }
  }

  TEST_CASE("batch-norm ablation keeps the same trainable count") {
    ModelConfig cfg;
    cfg.k = 2;
    cfg.norm = NormVariant::batch;
    cfg.pool = PoolVariant::maxpool;
    auto m = build_elnet<float>(cfg, false);
    CHECK(m.parameter_count() == 53178);
  }
}

TEST_SUITE("shape trace") {
  TEST_CASE("table output sizes for 256x256 input") {
    for (int64_t k : {1, 2}) {
      ModelConfig cfg;
      cfg.k = k;
      auto m = build_elnet<float>(cfg, false);
      auto x = TensorF::uniform(Shape{3, 1, 256, 256}, 99);
      NoGradGuard ng;
      ForwardTrace<float> tr;
      auto r = m.forward(x, false, 0, &tr);
      REQUIRE(r.probs.shape() == Shape{2});
      auto expect = std::vector<std::pair<std::string, Shape>>{
          {"stem", Shape{3, 4 * k, 128, 128}},
          {"stage1.pool", Shape{3, 4 * k, 62, 62}},
          {"stage1.blocks", Shape{3, 4 * k, 62, 62}},
          {"stage1.raise", Shape{3, 8 * k, 62, 62}},
          {"stage2.pool", Shape{3, 8 * k, 29, 29}},
          {"stage2.blocks", Shape{3, 8 * k, 29, 29}},
          {"stage2.raise", Shape{3, 16 * k, 29, 29}},
          {"stage3.pool", Shape{3, 16 * k, 13, 13}},
          {"stage3.blocks", Shape{3, 16 * k, 13, 13}},
          {"stage3.raise", Shape{3, 16 * k, 13, 13}},
          {"stage4.pool", Shape{3, 16 * k, 5, 5}},
          {"stage4.blocks", Shape{3, 16 * k, 5, 5}},
          {"stage4.raise", Shape{3, 16 * k, 5, 5}},
          {"stage5.pool", Shape{3, 16 * k, 1, 1}},
          {"global_maxpool", Shape{3, 16 * k}},
          {"slice_maxpool", Shape{16 * k}},
          {"logits", Shape{2}},
      };
      REQUIRE(tr.shapes.size() == expect.size());
      for (size_t i = 0; i < expect.size(); ++i) {
        CHECK(tr.shapes[i].first == expect[i].first);
        CHECK(tr.shapes[i].second == expect[i].second);
      }
    }
  }

  TEST_CASE("input size that collapses is rejected at build time") {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 64;  // 32 -> 14 -> 5 -> 1 -> collapse at stage 4
    CHECK_THROWS_AS(build_elnet<float>(cfg, false), std::invalid_argument);
  }

  TEST_CASE("wrong input size rejected at forward time") {
    ModelConfig cfg;
    auto m = build_elnet<float>(cfg, false);
    auto x = TensorF::uniform(Shape{1, 1, 96, 96}, 1);
    CHECK_THROWS_AS(m.forward(x, false), std::invalid_argument);
  }
}

TEST_SUITE("forward properties") {
  static ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.k = 1;
    cfg.input_h = cfg.input_w = 128;
    cfg.blur_b = {3, 3, 3, 3, 3};  // 64 -> 31 -> 15 -> 7 -> 3 -> 1
    cfg.seed = 3;
    return cfg;
  }

  TEST_CASE("probabilities form a distribution") {
    auto m = build_elnet<float>(small_cfg(), false);
    NoGradGuard ng;
    for (uint64_t s = 0; s < 5; ++s) {
      auto r = m.forward(TensorF::uniform(Shape{4, 1, 128, 128}, s), false);
      const float p0 = r.probs.values()[0], p1 = r.probs.values()[1];
      CHECK(p0 >= 0.0f);
      CHECK(p1 >= 0.0f);
      CHECK(std::fabs(p0 + p1 - 1.0f) < 1e-6f);
    }
  }

  TEST_CASE("deterministic given (seed, config, input)") {
    auto m1 = build_elnet<float>(small_cfg(), false);
    auto m2 = build_elnet<float>(small_cfg(), false);
    auto x = TensorF::uniform(Shape{3, 1, 128, 128}, 77);
    NoGradGuard ng;
    CHECK(m1.forward(x, false).probs.values() == m2.forward(x, false).probs.values());
  }

  TEST_CASE("slice permutation leaves the prediction unchanged") {
    auto m = build_elnet<float>(small_cfg(), false);
    auto x = TensorF::uniform(Shape{4, 1, 128, 128}, 31);
    NoGradGuard ng;
    auto base = m.forward(x, false).probs.values();
    const int64_t perm[4] = {2, 0, 3, 1};
    std::vector<float> pv(x.values().size());
    const size_t plane = 128 * 128;
    for (int64_t s = 0; s < 4; ++s)
      std::copy_n(x.values().begin() + perm[s] * plane, plane,
                  pv.begin() + s * plane);
    auto r = m.forward(TensorF::from_values(x.shape(), pv), false);
    CHECK(r.probs.values() == base);
  }

  TEST_CASE("duplicating the whole slice set is a bitwise no-op") {
    auto m = build_elnet<float>(small_cfg(), false);
    auto x = TensorF::uniform(Shape{2, 1, 128, 128}, 37);
    NoGradGuard ng;
    auto base = m.forward(x, false).probs.values();
    std::vector<float> dup(x.values().size() * 2);
    std::copy(x.values().begin(), x.values().end(), dup.begin());
    std::copy(x.values().begin(), x.values().end(), dup.begin() + x.values().size());
    auto r = m.forward(TensorF::from_values(Shape{4, 1, 128, 128}, dup), false);
    CHECK(r.probs.values() == base);
  }

  TEST_CASE("adding a duplicate slice never decreases classifier features") {
    auto m = build_elnet<float>(small_cfg(), false);
    auto x = TensorF::uniform(Shape{3, 1, 128, 128}, 41);
    NoGradGuard ng;
    ForwardTrace<float> tr1;
    m.forward(x, false, 0, &tr1);
    // append a copy of slice 1
    std::vector<float> ext(x.values().size() + 128 * 128);
    std::copy(x.values().begin(), x.values().end(), ext.begin());
    std::copy_n(x.values().begin() + 1 * 128 * 128, 128 * 128,
                ext.begin() + x.values().size());
    ForwardTrace<float> tr2;
    m.forward(TensorF::from_values(Shape{4, 1, 128, 128}, ext), false, 0, &tr2);
    for (size_t i = 0; i < tr1.features.values().size(); ++i)
      CHECK(tr2.features.values()[i] >= tr1.features.values()[i]);
  }

  TEST_CASE("single-slice volume: slice pool is the identity row") {
    auto m = build_elnet<float>(small_cfg(), false);
    auto x = TensorF::uniform(Shape{1, 1, 128, 128}, 43);
    NoGradGuard ng;
    ForwardTrace<float> tr;
    m.forward(x, false, 0, &tr);
    REQUIRE(tr.features.shape() == Shape{16});
  }

  TEST_CASE("maxpool ablation variant runs and differs") {
    ModelConfig cfg = small_cfg();
    cfg.pool = PoolVariant::maxpool;
    auto m = build_elnet<float>(cfg, false);
    auto x = TensorF::uniform(Shape{2, 1, 128, 128}, 47);
    NoGradGuard ng;
    auto r = m.forward(x, false);
    CHECK(std::fabs(r.probs.values()[0] + r.probs.values()[1] - 1.0f) < 1e-6f);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save -> load reproduces parameters bitwise and predictions exactly") {
    ModelConfig cfg;
    cfg.k = 2;
    cfg.input_h = cfg.input_w = 128;
    cfg.blur_b = {3, 3, 3, 3, 3};
    cfg.seed = 11;
    auto m = build_elnet<float>(cfg);
    // nudge parameters away from init so the test is not vacuous
    for (auto& [name, t] : m.parameters())
      for (auto& v : t.values()) v += 0.001f;
    const std::string path = temp_dir() + "/roundtrip.ckpt";
    save_checkpoint(m, path);
    auto m2 = load_checkpoint(path);
    auto p1 = m.parameters();
    auto p2 = m2.parameters();
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) {
      CHECK(p1[i].first == p2[i].first);
      CHECK(p1[i].second.values() == p2[i].second.values());
    }
    NoGradGuard ng;
    for (uint64_t s = 0; s < 10; ++s) {
      auto x = TensorF::uniform(Shape{3, 1, 128, 128}, 500 + s);
      CHECK(m.forward(x, false).probs.values() == m2.forward(x, false).probs.values());
    }
  }

  TEST_CASE("K=4 file lands in the published size band") {
    ModelConfig cfg;
    cfg.k = 4;
    auto m = build_elnet<float>(cfg, false);
    const std::string path = temp_dir() + "/k4.ckpt";
    save_checkpoint(m, path);
    const auto bytes = fs::file_size(path);
    CHECK(bytes >= 840000);
    CHECK(bytes <= 880000);
    // ~ 4 bytes per parameter plus a small header
    CHECK(bytes >= 211314 * 4);
    CHECK(bytes <= 211314 * 4 + 4096);
  }

  TEST_CASE("corrupted magic fails to load") {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 128;
    cfg.blur_b = {3, 3, 3, 3, 3};
    auto m = build_elnet<float>(cfg, false);
    const std::string path = temp_dir() + "/corrupt.ckpt";
    save_checkpoint(m, path);
    {
      std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(0);
      f.write("XXXX", 4);
    }
    CHECK_THROWS(load_checkpoint(path));
  }

  TEST_CASE("truncated file fails to load") {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 128;
    cfg.blur_b = {3, 3, 3, 3, 3};
    auto m = build_elnet<float>(cfg, false);
    const std::string path = temp_dir() + "/trunc.ckpt";
    save_checkpoint(m, path);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full / 2);
    CHECK_THROWS(load_checkpoint(path));
  }

  TEST_CASE("batch variant persists running statistics") {
    ModelConfig cfg;
    cfg.norm = NormVariant::batch;
    cfg.input_h = cfg.input_w = 128;
    cfg.blur_b = {3, 3, 3, 3, 3};
    auto m = build_elnet<float>(cfg);
    m.stem_norm.bn_state.running_mean[0] = 0.75f;
    m.stem_norm.bn_state.running_var[1] = 2.5f;
    const std::string path = temp_dir() + "/bn.ckpt";
    save_checkpoint(m, path);
    auto m2 = load_checkpoint(path);
    CHECK(m2.stem_norm.bn_state.running_mean[0] == 0.75f);
    CHECK(m2.stem_norm.bn_state.running_var[1] == 2.5f);
  }
}

TEST_SUITE("end-to-end gradient") {
  TEST_CASE("reduced 3-stage K=1 variant passes finite differences at 1e-3") {
    ModelConfig cfg;
    cfg.k = 1;
    cfg.stages = 3;  // 64 -> 32 -> 14 -> 5 -> 1
    cfg.input_h = cfg.input_w = 64;
    cfg.dropout_rate = 0.0;
    cfg.seed = 5;
    auto m = build_elnet<double>(cfg);
    auto x = TensorD::uniform(Shape{2, 1, 64, 64}, 2024, 0.0, 1.0, true);

    auto loss_of = [&](bool record) {
      if (!record) {
        NoGradGuard ng;
        auto r = m.forward(x, false);
        return cross_entropy(r.probs, 1).scalar();
      }
      auto r = m.forward(x, false);
      auto loss = cross_entropy(r.probs, 1);
      const double v = loss.scalar();
      backward(loss);
      return v;
    };

    {
      // keep the check well-conditioned: the prediction must not saturate
      NoGradGuard ng;
      auto p = m.forward(x, false).probs.values();
      REQUIRE(p[1] > 1e-4);
      REQUIRE(p[1] < 1.0 - 1e-4);
    }

    m.zero_grad();
    x.zero_grad();
    loss_of(true);

    const double step = 1e-5;
    double max_rel = 0.0;
    auto probe = [&](std::vector<double>& vals, const std::vector<double>& grad,
                     size_t j) {
      const double saved = vals[j];
      vals[j] = saved + step;
      const double up = loss_of(false);
      vals[j] = saved - step;
      const double down = loss_of(false);
      vals[j] = saved;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({std::fabs(grad[j]), std::fabs(numeric), 1e-3});
      max_rel = std::max(max_rel, std::fabs(grad[j] - numeric) / denom);
    };

    Rng rng(55);
    for (auto& [name, t] : m.parameters()) {
      const size_t n = t.values().size();
      // a deterministic handful of coordinates per tensor
      for (int c = 0; c < 5; ++c)
        probe(t.values(), t.grad(), static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n))));
    }
    for (int c = 0; c < 10; ++c)
      probe(x.values(), x.grad(),
            static_cast<size_t>(rng.uniform_int(x.numel())));
    INFO("max_rel=" << max_rel);
    CHECK(max_rel < 1e-3);
  }
}
