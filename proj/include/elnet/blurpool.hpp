#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "elnet/tensor.hpp"

namespace elnet {

// Normalized binomial filter taps: row B-1 of Pascal's triangle divided by
// 2^(B-1). Non-negative, symmetric, sums to 1.
template <typename T = double>
std::vector<T> binomial_kernel(int64_t b) {
  if (b < 2) throw std::invalid_argument("binomial_kernel: B must be >= 2");
  std::vector<double> row(static_cast<size_t>(b), 0.0);
  row[0] = 1.0;
  for (int64_t i = 1; i < b; ++i)
    for (int64_t j = i; j > 0; --j) row[static_cast<size_t>(j)] += row[static_cast<size_t>(j - 1)];
  const double norm = std::pow(2.0, static_cast<double>(b - 1));
  std::vector<T> out(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i)
    out[static_cast<size_t>(i)] = static_cast<T>(row[static_cast<size_t>(i)] / norm);
  return out;
}

// Anti-aliased downsampling: depthwise convolution with the 2D binomial
// kernel (outer product of the 1D taps), no padding, stride 2.
// H' = floor((H - B) / 2) + 1, same for W.
template <typename T>
TensorT<T> blurpool2d(const TensorT<T>& x, int64_t b) {
  if (x.rank() != 4)
    throw std::invalid_argument("blurpool2d: input must be rank 4");
  const int64_t S = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  if (H < b || W < b)
    throw std::invalid_argument("blurpool2d: spatial dims smaller than kernel, input " +
                                x.shape().str() + ", B=" + std::to_string(b));
  const auto k1 = binomial_kernel<T>(b);
  const int64_t stride = 2;
  const int64_t Ho = (H - b) / stride + 1;
  const int64_t Wo = (W - b) / stride + 1;
  std::vector<T> v(static_cast<size_t>(S * C * Ho * Wo), T(0));
  const T* xp = x.values().data();
  for (int64_t sc = 0; sc < S * C; ++sc) {
    const T* plane = xp + sc * H * W;
    T* out_plane = v.data() + sc * Ho * Wo;
    for (int64_t kh = 0; kh < b; ++kh) {
      for (int64_t kw = 0; kw < b; ++kw) {
        const T wv = k1[static_cast<size_t>(kh)] * k1[static_cast<size_t>(kw)];
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const T* xrow = plane + (oh * stride + kh) * W + kw;
          T* orow = out_plane + oh * Wo;
          for (int64_t ow = 0; ow < Wo; ++ow) orow[ow] += wv * xrow[ow * stride];
        }
      }
    }
  }
  auto out = op_result<T>(Shape{S, C, Ho, Wo}, std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(), k1, b,
                             S, C, H, W, Ho, Wo, stride]() {
      xn->ensure_grad();
      for (int64_t sc = 0; sc < S * C; ++sc) {
        const T* gp = self->grad.data() + sc * Ho * Wo;
        T* dx = xn->grad.data() + sc * H * W;
        for (int64_t kh = 0; kh < b; ++kh) {
          for (int64_t kw = 0; kw < b; ++kw) {
            const T wv = k1[static_cast<size_t>(kh)] * k1[static_cast<size_t>(kw)];
            for (int64_t oh = 0; oh < Ho; ++oh) {
              T* dxrow = dx + (oh * stride + kh) * W + kw;
              const T* grow = gp + oh * Wo;
              for (int64_t ow = 0; ow < Wo; ++ow)
                dxrow[ow * stride] += wv * grow[ow];
            }
          }
        }
      }
    };
  }
  return out;
}

}  // namespace elnet
