#pragma once

#include "elnet/ops.hpp"

namespace elnet {

// Multi-slice normalization. Both variants standardize each slice
// independently of the others and then apply a learned per-channel affine
// transform; they differ only in the statistics grouping:
//   layer variant    -- one (mean, var) per slice over all (C, H, W)
//   contrast variant -- one (mean, var) per (slice, channel) plane over (H, W)
template <typename T>
struct NormParams {
  TensorT<T> gamma;  // (C), initialized to 1
  TensorT<T> beta;   // (C), initialized to 0
  T eps = T(1e-8);

  static NormParams init(int64_t channels, bool requires_grad = true) {
    NormParams p;
    p.gamma = TensorT<T>::full(Shape{channels}, T(1), requires_grad);
    p.beta = TensorT<T>::zeros(Shape{channels}, requires_grad);
    return p;
  }
};

template <typename T>
void check_norm_input(const TensorT<T>& x, const NormParams<T>& p,
                      const char* name) {
  if (x.rank() != 4)
    throw std::invalid_argument(std::string(name) + ": input must be rank 4");
  if (p.gamma.shape()[0] != x.shape()[1] || p.beta.shape()[0] != x.shape()[1])
    throw std::invalid_argument(std::string(name) +
                                ": channel count mismatch, input " +
                                x.shape().str());
}

template <typename T>
TensorT<T> layer_norm_slices(const TensorT<T>& x, const NormParams<T>& p) {
  check_norm_input(x, p, "layer_norm_slices");
  const int64_t group = x.shape()[1] * x.shape()[2] * x.shape()[3];
  return channel_bias(channel_scale(standardize_groups(x, group, p.eps),
                                    p.gamma),
                      p.beta);
}

template <typename T>
TensorT<T> contrast_norm(const TensorT<T>& x, const NormParams<T>& p) {
  check_norm_input(x, p, "contrast_norm");
  const int64_t group = x.shape()[2] * x.shape()[3];
  return channel_bias(channel_scale(standardize_groups(x, group, p.eps),
                                    p.gamma),
                      p.beta);
}

}  // namespace elnet
