#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "elnet/grad_check.hpp"
#include "elnet/ops.hpp"

using namespace elnet;

namespace {

// Direct nested-loop convolution: per output element, accumulate over
// (cin, kh, kw) in order. Independent of the production kernel layout.
template <typename T>
std::vector<T> conv2d_oracle(const std::vector<T>& x, int64_t S, int64_t Ci,
                             int64_t H, int64_t W, const std::vector<T>& w,
                             int64_t Co, int64_t k, int64_t stride, int64_t pad) {
  const int64_t Ho = (H + 2 * pad - k) / stride + 1;
  const int64_t Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<T> y(static_cast<size_t>(S * Co * Ho * Wo), T(0));
  for (int64_t s = 0; s < S; ++s)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          T acc = T(0);
          for (int64_t ci = 0; ci < Ci; ++ci)
            for (int64_t kh = 0; kh < k; ++kh)
              for (int64_t kw = 0; kw < k; ++kw) {
                const int64_t ih = oh * stride - pad + kh;
                const int64_t iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += w[static_cast<size_t>(((co * Ci + ci) * k + kh) * k + kw)] *
                       x[static_cast<size_t>(((s * Ci + ci) * H + ih) * W + iw)];
              }
          y[static_cast<size_t>(((s * Co + co) * Ho + oh) * Wo + ow)] = acc;
        }
  return y;
}

TensorD random_proj(const Shape& s, uint64_t seed) {
  return TensorD::uniform(s, seed, -1.0, 1.0);
}

}  // namespace

TEST_SUITE("conv2d") {
  TEST_CASE("matches the nested-loop oracle exactly at 64-bit") {
    struct Case {
      int64_t S, Ci, H, W, Co, k, stride, pad;
    };
    const Case cases[] = {
        {2, 3, 5, 5, 4, 3, 1, 0}, {2, 3, 5, 5, 4, 3, 1, 1},
        {1, 1, 8, 8, 2, 7, 2, 3}, {2, 4, 8, 8, 3, 5, 2, 2},
        {2, 4, 8, 8, 4, 3, 1, 1}, {1, 2, 4, 7, 2, 3, 2, 1},
    };
    uint64_t seed = 100;
    for (const auto& c : cases) {
      auto x = TensorD::uniform(Shape{c.S, c.Ci, c.H, c.W}, seed++, -1, 1);
      auto w = TensorD::uniform(Shape{c.Co, c.Ci, c.k, c.k}, seed++, -1, 1);
      auto y = conv2d(x, w, c.stride, c.pad);
      auto ref = conv2d_oracle(x.values(), c.S, c.Ci, c.H, c.W, w.values(),
                               c.Co, c.k, c.stride, c.pad);
      REQUIRE(y.values().size() == ref.size());
      for (size_t i = 0; i < ref.size(); ++i) CHECK(y.values()[i] == ref[i]);
    }
  }

  TEST_CASE("table row: 256 -> 128 with 7x7 stride 2 pad 3") {
    const int64_t K = 1;
    auto x = TensorF::uniform(Shape{3, 1, 256, 256}, 5);
    auto w = TensorF::uniform(Shape{4 * K, 1, 7, 7}, 6, -0.1f, 0.1f);
    auto y = conv2d(x, w, 2, 3);
    CHECK(y.shape() == Shape{3, 4 * K, 128, 128});
  }

  TEST_CASE("1x1 identity kernel reproduces the input") {
    // identity matrix over channels
    std::vector<double> w(4, 0.0);
    w[0] = 1.0;  // (0,0)
    w[3] = 1.0;  // (1,1)
    auto wt = TensorD::from_values(Shape{2, 2, 1, 1}, w);
    auto x = TensorD::uniform(Shape{2, 2, 4, 4}, 17, -1, 1);
    auto y = conv2d(x, wt, 1, 0);
    CHECK(y.values() == x.values());
  }

  TEST_CASE("slice independence") {
    auto w = TensorD::uniform(Shape{2, 2, 3, 3}, 40, -1, 1);
    auto x = TensorD::uniform(Shape{3, 2, 6, 6}, 41, -1, 1);
    auto y0 = conv2d(x, w, 1, 1);
    // perturb slices 1 and 2; slice 0's output must not move
    auto x2 = x.clone_detached();
    for (size_t i = 2 * 6 * 6; i < x2.values().size(); ++i) x2.values()[i] += 0.5;
    auto y2 = conv2d(x2, w, 1, 1);
    const size_t plane = 2 * 6 * 6;
    for (size_t i = 0; i < plane; ++i) CHECK(y0.values()[i] == y2.values()[i]);
  }

  TEST_CASE("channel mismatch and collapsed output rejected") {
    auto x = TensorD::uniform(Shape{1, 3, 4, 4}, 50, 0, 1);
    auto w = TensorD::uniform(Shape{2, 2, 3, 3}, 51, 0, 1);
    CHECK_THROWS_AS(conv2d(x, w, 1, 0), std::invalid_argument);
    auto w2 = TensorD::uniform(Shape{2, 3, 5, 5}, 52, 0, 1);
    auto tiny = TensorD::uniform(Shape{1, 3, 3, 3}, 53, 0, 1);
    CHECK_THROWS_AS(conv2d(tiny, w2, 1, 0), std::invalid_argument);
  }

  TEST_CASE("gradient w.r.t. input and weights") {
    auto w = TensorD::uniform(Shape{3, 2, 3, 3}, 60, -1, 1);
    auto x0 = TensorD::uniform(Shape{2, 2, 5, 5}, 61, -1, 1);
    auto proj = random_proj(Shape{2, 3, 3, 3}, 62);
    auto fn_x = [&](const TensorD& t) {
      return sum_all(mul(conv2d(t, w, 2, 1), proj));
    };
    CHECK(grad_check(fn_x, x0, 1e-6).pass);
    auto fn_w = [&](const TensorD& t) {
      return sum_all(mul(conv2d(x0, t, 2, 1), proj));
    };
    CHECK(grad_check(fn_w, w, 1e-6).pass);
  }
}

TEST_SUITE("relu") {
  TEST_CASE("definition") {
    auto x = TensorF::from_values(Shape{3}, {-1, 0, 2});
    CHECK(relu(x).values() == std::vector<float>{0, 0, 2});
  }

  TEST_CASE("all-positive input is identity") {
    auto x = TensorF::uniform(Shape{10}, 3, 0.1f, 2.0f);
    CHECK(relu(x).values() == x.values());
  }

  TEST_CASE("gradient under sum loss") {
    auto x = TensorD::from_values(Shape{2}, {-1, 2}, true);
    backward(sum_all(relu(x)));
    CHECK(x.grad() == std::vector<double>{0, 1});
  }
}

TEST_SUITE("pooling") {
  TEST_CASE("global pool shape (s,16K,5,5) -> (s,16K)") {
    auto x = TensorF::uniform(Shape{3, 32, 5, 5}, 9);
    CHECK(global_maxpool2d(x).shape() == Shape{3, 32});
  }

  TEST_CASE("constant input stays constant") {
    auto x = TensorF::full(Shape{2, 3, 4, 4}, 1.5f);
    auto y = maxpool2d(x, 2, 2);
    for (float v : y.values()) CHECK(v == 1.5f);
  }

  TEST_CASE("matches brute-force window maximum") {
    auto x = TensorD::uniform(Shape{1, 1, 4, 4}, 77, -1, 1);
    auto y = maxpool2d(x, 2, 2);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (int64_t oh = 0; oh < 2; ++oh)
      for (int64_t ow = 0; ow < 2; ++ow) {
        double best = -1e300;
        for (int64_t kh = 0; kh < 2; ++kh)
          for (int64_t kw = 0; kw < 2; ++kw)
            best = std::max(best,
                            x.values()[static_cast<size_t>((oh * 2 + kh) * 4 + ow * 2 + kw)]);
        CHECK(y.values()[static_cast<size_t>(oh * 2 + ow)] == best);
      }
  }

  TEST_CASE("window larger than input rejected") {
    auto x = TensorD::uniform(Shape{1, 1, 3, 3}, 78, 0, 1);
    CHECK_THROWS_AS(maxpool2d(x, 4, 1), std::invalid_argument);
  }

  TEST_CASE("maxpool gradient away from ties") {
    auto proj = random_proj(Shape{1, 2, 2, 2}, 80);
    auto fn = [&](const TensorD& t) { return sum_all(mul(maxpool2d(t, 2, 2), proj)); };
    CHECK(grad_check(fn, TensorD::uniform(Shape{1, 2, 4, 4}, 81, -1, 1), 1e-6).pass);
  }
}

TEST_SUITE("slice_maxpool") {
  TEST_CASE("single slice is identity") {
    auto x = TensorF::from_values(Shape{1, 4}, {1, 2, 3, 4});
    CHECK(slice_maxpool(x).values() == std::vector<float>{1, 2, 3, 4});
  }

  TEST_CASE("definition") {
    auto x = TensorF::from_values(Shape{2, 2}, {1, 5, 3, 2});
    CHECK(slice_maxpool(x).values() == std::vector<float>{3, 5});
  }

  TEST_CASE("invariant under slice permutation") {
    auto x = TensorD::uniform(Shape{7, 64}, 91, -1, 1);
    auto base = slice_maxpool(x).values();
    Rng rng(4242);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<int64_t> perm(7);
      for (int64_t i = 0; i < 7; ++i) perm[static_cast<size_t>(i)] = i;
      for (size_t i = 7; i > 1; --i)
        std::swap(perm[i - 1], perm[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
      std::vector<double> shuffled(7 * 64);
      for (int64_t s = 0; s < 7; ++s)
        for (int64_t d = 0; d < 64; ++d)
          shuffled[static_cast<size_t>(s * 64 + d)] =
              x.values()[static_cast<size_t>(perm[static_cast<size_t>(s)] * 64 + d)];
      auto y = slice_maxpool(TensorD::from_values(Shape{7, 64}, shuffled));
      CHECK(y.values() == base);
    }
  }
}

TEST_SUITE("linear_softmax") {
  TEST_CASE("symmetric logits give a coin flip") {
    auto z = TensorD::from_values(Shape{2}, {0, 0});
    auto p = softmax_vec(z);
    CHECK(p.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
    auto z2 = TensorD::from_values(Shape{2}, {13.7, 13.7});
    auto p2 = softmax_vec(z2);
    CHECK(p2.values()[0] == 0.5);
    CHECK(p2.values()[1] == 0.5);
  }

  TEST_CASE("logits (1,3) give (1/(1+e^2), e^2/(1+e^2))") {
    auto p = softmax_vec(TensorD::from_values(Shape{2}, {1, 3}));
    const double e2 = std::exp(2.0);
    CHECK(p.values()[0] == doctest::Approx(1.0 / (1.0 + e2)).epsilon(1e-14));
    CHECK(p.values()[1] == doctest::Approx(e2 / (1.0 + e2)).epsilon(1e-14));
  }

  TEST_CASE("outputs sum to 1 for logits up to |50|") {
    Rng rng(123);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> z = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
      auto p = softmax_vec(TensorD::from_values(Shape{2}, z));
      CHECK(std::fabs(p.values()[0] + p.values()[1] - 1.0) < 1e-6);
      CHECK(p.values()[0] > 0.0);
      CHECK(p.values()[1] > 0.0);
    }
  }

  TEST_CASE("full head: dimension checks and value") {
    auto w = TensorD::uniform(Shape{2, 8}, 130, -1, 1);
    auto b = TensorD::uniform(Shape{2}, 131, -1, 1);
    auto v = TensorD::uniform(Shape{8}, 132, -1, 1);
    auto p = linear_softmax(v, w, b);
    CHECK(p.shape() == Shape{2});
    auto bad = TensorD::uniform(Shape{5}, 133, -1, 1);
    CHECK_THROWS_AS(linear_softmax(bad, w, b), std::invalid_argument);
  }

  TEST_CASE("gradient through the head") {
    auto w = TensorD::uniform(Shape{2, 6}, 140, -1, 1);
    auto b = TensorD::uniform(Shape{2}, 141, -1, 1);
    auto fn = [&](const TensorD& t) {
      return cross_entropy(linear_softmax(t, w, b), 1);
    };
    CHECK(grad_check(fn, TensorD::uniform(Shape{6}, 142, -1, 1), 1e-6).pass);
    auto v = TensorD::uniform(Shape{6}, 143, -1, 1);
    auto fn_w = [&](const TensorD& t) {
      return cross_entropy(linear_softmax(v, t, b), 0);
    };
    CHECK(grad_check(fn_w, w, 1e-6).pass);
  }
}

TEST_SUITE("cross_entropy") {
  TEST_CASE("perfect prediction has zero loss") {
    auto p = TensorD::from_values(Shape{2}, {1, 0});
    CHECK(cross_entropy(p, 0).scalar() == 0.0);
  }

  TEST_CASE("coin flip costs ln 2") {
    auto p = TensorD::from_values(Shape{2}, {0.5, 0.5});
    CHECK(cross_entropy(p, 0).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(cross_entropy(p, 1).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }

  TEST_CASE("zero probability stays finite via the clamp") {
    auto p = TensorD::from_values(Shape{2}, {0.0, 1.0});
    const double loss = cross_entropy(p, 0).scalar();
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(1e-12)));
  }

  TEST_CASE("invalid label rejected") {
    auto p = TensorD::from_values(Shape{2}, {0.5, 0.5});
    CHECK_THROWS_AS(cross_entropy(p, 2), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy(p, -1), std::invalid_argument);
  }

  TEST_CASE("gradient w.r.t. logits equals softmax minus one-hot") {
    auto z = TensorD::from_values(Shape{2}, {0.3, -1.2}, true);
    auto p = softmax_vec(z);
    backward(cross_entropy(p, 1));
    const double p0 = p.values()[0], p1 = p.values()[1];
    CHECK(z.grad()[0] == doctest::Approx(p0 - 0.0).epsilon(1e-12));
    CHECK(z.grad()[1] == doctest::Approx(p1 - 1.0).epsilon(1e-12));
  }
}

TEST_SUITE("dropout") {
  TEST_CASE("rate 0 is the identity in both modes") {
    auto x = TensorF::uniform(Shape{20}, 8, -1, 1);
    CHECK(dropout(x, 0.0, true, 1).values() == x.values());
    CHECK(dropout(x, 0.0, false, 1).values() == x.values());
  }

  TEST_CASE("eval mode is the identity at any rate") {
    auto x = TensorF::uniform(Shape{20}, 8, -1, 1);
    CHECK(dropout(x, 0.7, false, 1).values() == x.values());
  }

  TEST_CASE("rate >= 1 rejected") {
    auto x = TensorF::uniform(Shape{4}, 8, 0, 1);
    CHECK_THROWS_AS(dropout(x, 1.0, true, 1), std::invalid_argument);
  }

  TEST_CASE("survivor fraction and expectation at rate 0.5") {
    const int64_t n = 100000;
    auto x = TensorD::full(Shape{n}, 1.0);
    auto y = dropout(x, 0.5, true, 777);
    int64_t survivors = 0;
    double total = 0.0;
    for (double v : y.values()) {
      if (v != 0.0) ++survivors;
      total += v;
    }
    const double frac = static_cast<double>(survivors) / static_cast<double>(n);
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
    CHECK(total / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("same seed gives the same mask") {
    auto x = TensorF::uniform(Shape{100}, 4, 0.5, 1.5);
    CHECK(dropout(x, 0.5, true, 12).values() == dropout(x, 0.5, true, 12).values());
  }

  TEST_CASE("gradient with a fixed mask") {
    auto fn = [](const TensorD& t) { return sum_all(dropout(t, 0.5, true, uint64_t{99})); };
    CHECK(grad_check(fn, TensorD::uniform(Shape{16}, 51, -1, 1), 1e-6).pass);
  }
}

TEST_SUITE("batchnorm") {
  TEST_CASE("constant input maps to beta in train mode") {
    auto x = TensorF::full(Shape{2, 3, 4, 4}, 5.0f);
    auto gamma = TensorF::full(Shape{3}, 1.0f);
    auto beta = TensorF::from_values(Shape{3}, {0.5f, -0.5f, 2.0f});
    BatchNormState<float> st(3);
    auto y = batchnorm_slices(x, gamma, beta, st, true);
    for (int64_t s = 0; s < 2; ++s)
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 16; ++i)
          CHECK(y.values()[static_cast<size_t>((s * 3 + c) * 16 + i)] ==
                beta.values()[static_cast<size_t>(c)]);
  }

  TEST_CASE("per-channel statistics standardize across slices") {
    auto x = TensorD::uniform(Shape{4, 3, 5, 5}, 300, -2, 3);
    BatchNormState<double> st(3);
    auto y = batchnorm_standardize(x, st, true);
    const int64_t HW = 25, S = 4, C = 3;
    for (int64_t c = 0; c < C; ++c) {
      double mean = 0.0, var = 0.0;
      for (int64_t s = 0; s < S; ++s)
        for (int64_t i = 0; i < HW; ++i)
          mean += y.values()[static_cast<size_t>((s * C + c) * HW + i)];
      mean /= static_cast<double>(S * HW);
      for (int64_t s = 0; s < S; ++s)
        for (int64_t i = 0; i < HW; ++i) {
          const double d = y.values()[static_cast<size_t>((s * C + c) * HW + i)] - mean;
          var += d * d;
        }
      var /= static_cast<double>(S * HW);
      CHECK(std::fabs(mean) < 1e-5);
      CHECK(std::fabs(var - 1.0) < 1e-5);
    }
  }

  TEST_CASE("single slice reduces to per-channel spatial standardization") {
    auto x = TensorD::uniform(Shape{1, 2, 6, 6}, 301, -1, 1);
    BatchNormState<double> st(2);
    auto y = batchnorm_standardize(x, st, true);
    auto ref = standardize_groups(x, 36, 1e-8);
    for (size_t i = 0; i < y.values().size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-12));
  }

  TEST_CASE("eval mode uses running statistics") {
    BatchNormState<float> st(1);
    st.running_mean[0] = 2.0f;
    st.running_var[0] = 4.0f;
    auto x = TensorF::full(Shape{1, 1, 2, 2}, 4.0f);
    auto y = batchnorm_standardize(x, st, false);
    CHECK(y.values()[0] == doctest::Approx(1.0f).epsilon(1e-4));
  }

  TEST_CASE("gradients for input, gamma, beta") {
    auto gamma0 = TensorD::uniform(Shape{2}, 310, 0.5, 1.5);
    auto beta0 = TensorD::uniform(Shape{2}, 311, -0.5, 0.5);
    auto x0 = TensorD::uniform(Shape{2, 2, 3, 3}, 312, -1, 1);
    auto proj = random_proj(Shape{2, 2, 3, 3}, 313);
    auto fn_x = [&](const TensorD& t) {
      BatchNormState<double> st(2);
      return sum_all(mul(batchnorm_slices(t, gamma0, beta0, st, true), proj));
    };
    CHECK(grad_check(fn_x, x0, 1e-4).pass);
    auto fn_g = [&](const TensorD& t) {
      BatchNormState<double> st(2);
      return sum_all(mul(batchnorm_slices(x0, t, beta0, st, true), proj));
    };
    CHECK(grad_check(fn_g, gamma0, 1e-6).pass);
    auto fn_b = [&](const TensorD& t) {
      BatchNormState<double> st(2);
      return sum_all(mul(batchnorm_slices(x0, gamma0, t, st, true), proj));
    };
    CHECK(grad_check(fn_b, beta0, 1e-6).pass);
  }
}
