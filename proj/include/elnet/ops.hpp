#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "elnet/parallel.hpp"
#include "elnet/rng.hpp"
#include "elnet/tensor.hpp"

namespace elnet {

// ---------------------------------------------------------------------------
// elementwise / reduction
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  std::vector<T> v(a.values().size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  auto out = op_result<T>(a.shape(), std::move(v), {a.node, b.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), an = a.node.get(),
                             bn = b.node.get()]() {
      an->ensure_grad();
      bn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        an->grad[i] += self->grad[i];
        bn->grad[i] += self->grad[i];
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  std::vector<T> v(a.values().size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  auto out = op_result<T>(a.shape(), std::move(v), {a.node, b.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), an = a.node.get(),
                             bn = b.node.get()]() {
      an->ensure_grad();
      bn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        an->grad[i] += self->grad[i] * bn->value[i];
        bn->grad[i] += self->grad[i] * an->value[i];
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  std::vector<T> v(a.values().size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  auto out = op_result<T>(a.shape(), std::move(v), {a.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), an = a.node.get(), c]() {
      an->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        an->grad[i] += self->grad[i] * c;
    };
  }
  return out;
}

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
  T s = T(0);
  for (T v : a.values()) s += v;
  auto out = op_result<T>(Shape{1}, std::vector<T>{s}, {a.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), an = a.node.get()]() {
      an->ensure_grad();
      const T g = self->grad[0];
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    };
  }
  return out;
}

template <typename T>
TensorT<T> pick(const TensorT<T>& a, int64_t index) {
  if (index < 0 || index >= a.numel())
    throw std::invalid_argument("pick: index out of range");
  auto out = op_result<T>(Shape{1},
                          std::vector<T>{a.values()[static_cast<size_t>(index)]},
                          {a.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), an = a.node.get(),
                             index]() {
      an->ensure_grad();
      an->grad[static_cast<size_t>(index)] += self->grad[0];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  std::vector<T> v(x.values().size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
  auto out = op_result<T>(x.shape(), std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get()]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        if (xn->value[i] > T(0)) xn->grad[i] += self->grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution: x (S, Cin, H, W) * w (Cout, Cin, k, k), per-slice batch,
// no bias term
// ---------------------------------------------------------------------------

struct Conv2dDims {
  int64_t s, cin, h, w, cout, k, stride, pad, ho, wo;
};

inline Conv2dDims conv2d_dims(const Shape& xs, const Shape& ws, int64_t stride,
                              int64_t pad) {
  if (xs.rank() != 4) throw std::invalid_argument("conv2d: input must be rank 4");
  if (ws.rank() != 4) throw std::invalid_argument("conv2d: weights must be rank 4");
  if (ws[2] != ws[3]) throw std::invalid_argument("conv2d: kernel must be square");
  if (ws[2] % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (xs[1] != ws[1])
    throw std::invalid_argument("conv2d: channel mismatch, input has " +
                                std::to_string(xs[1]) + ", weights expect " +
                                std::to_string(ws[1]));
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  Conv2dDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad, 0, 0};
  d.ho = (d.h + 2 * pad - d.k) / stride + 1;
  d.wo = (d.w + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k || d.ho < 1 || d.wo < 1)
    throw std::invalid_argument("conv2d: output dim < 1 for input " + xs.str());
  return d;
}

namespace detail {

// One (slice, cout) output plane. Accumulation order over (cin, kh, kw) is
// fixed, so the result is bitwise independent of the worker count.
template <typename T>
void conv2d_plane(const T* x, const T* w, T* out, const Conv2dDims& d,
                  int64_t s, int64_t co) {
  const int64_t hw = d.h * d.w;
  const T* x_slice = x + s * d.cin * hw;
  const T* w_co = w + co * d.cin * d.k * d.k;
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    const T* xp = x_slice + ci * hw;
    const T* wp = w_co + ci * d.k * d.k;
    for (int64_t kh = 0; kh < d.k; ++kh) {
      for (int64_t kw = 0; kw < d.k; ++kw) {
        const T wv = wp[kh * d.k + kw];
        // valid output rows: 0 <= oh*stride - pad + kh < h
        int64_t oh_lo = 0, oh_hi = d.ho;
        while (oh_lo < d.ho && oh_lo * d.stride - d.pad + kh < 0) ++oh_lo;
        while (oh_hi > oh_lo && (oh_hi - 1) * d.stride - d.pad + kh >= d.h)
          --oh_hi;
        int64_t ow_lo = 0, ow_hi = d.wo;
        while (ow_lo < d.wo && ow_lo * d.stride - d.pad + kw < 0) ++ow_lo;
        while (ow_hi > ow_lo && (ow_hi - 1) * d.stride - d.pad + kw >= d.w)
          --ow_hi;
        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
          const T* xrow = xp + (oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
          T* orow = out + oh * d.wo;
          for (int64_t ow = ow_lo; ow < ow_hi; ++ow)
            orow[ow] += wv * xrow[ow * d.stride];
        }
      }
    }
  }
}

// d(input) for one (slice, cin) plane, gathered over (cout, kh, kw).
template <typename T>
void conv2d_dx_plane(const T* g, const T* w, T* dx, const Conv2dDims& d,
                     int64_t s, int64_t ci) {
  const int64_t howo = d.ho * d.wo;
  const T* g_slice = g + s * d.cout * howo;
  for (int64_t co = 0; co < d.cout; ++co) {
    const T* gp = g_slice + co * howo;
    const T* wp = w + (co * d.cin + ci) * d.k * d.k;
    for (int64_t kh = 0; kh < d.k; ++kh) {
      for (int64_t kw = 0; kw < d.k; ++kw) {
        const T wv = wp[kh * d.k + kw];
        int64_t oh_lo = 0, oh_hi = d.ho;
        while (oh_lo < d.ho && oh_lo * d.stride - d.pad + kh < 0) ++oh_lo;
        while (oh_hi > oh_lo && (oh_hi - 1) * d.stride - d.pad + kh >= d.h)
          --oh_hi;
        int64_t ow_lo = 0, ow_hi = d.wo;
        while (ow_lo < d.wo && ow_lo * d.stride - d.pad + kw < 0) ++ow_lo;
        while (ow_hi > ow_lo && (ow_hi - 1) * d.stride - d.pad + kw >= d.w)
          --ow_hi;
        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
          T* dxrow = dx + (oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
          const T* grow = gp + oh * d.wo;
          for (int64_t ow = ow_lo; ow < ow_hi; ++ow)
            dxrow[ow * d.stride] += wv * grow[ow];
        }
      }
    }
  }
}

// d(weights) for one (cout, cin) kernel tile, reduced over (s, oh, ow).
template <typename T>
void conv2d_dw_tile(const T* g, const T* x, T* dw, const Conv2dDims& d,
                    int64_t co, int64_t ci) {
  const int64_t hw = d.h * d.w;
  const int64_t howo = d.ho * d.wo;
  T* dwp = dw + (co * d.cin + ci) * d.k * d.k;
  for (int64_t kh = 0; kh < d.k; ++kh) {
    for (int64_t kw = 0; kw < d.k; ++kw) {
      T acc = T(0);
      for (int64_t s = 0; s < d.s; ++s) {
        const T* xp = x + (s * d.cin + ci) * hw;
        const T* gp = g + (s * d.cout + co) * howo;
        int64_t oh_lo = 0, oh_hi = d.ho;
        while (oh_lo < d.ho && oh_lo * d.stride - d.pad + kh < 0) ++oh_lo;
        while (oh_hi > oh_lo && (oh_hi - 1) * d.stride - d.pad + kh >= d.h)
          --oh_hi;
        int64_t ow_lo = 0, ow_hi = d.wo;
        while (ow_lo < d.wo && ow_lo * d.stride - d.pad + kw < 0) ++ow_lo;
        while (ow_hi > ow_lo && (ow_hi - 1) * d.stride - d.pad + kw >= d.w)
          --ow_hi;
        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
          const T* xrow = xp + (oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
          const T* grow = gp + oh * d.wo;
          for (int64_t ow = ow_lo; ow < ow_hi; ++ow)
            acc += grow[ow] * xrow[ow * d.stride];
        }
      }
      dwp[kh * d.k + kw] += acc;
    }
  }
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int64_t stride,
                  int64_t pad) {
  const Conv2dDims d = conv2d_dims(x.shape(), w.shape(), stride, pad);
  std::vector<T> v(static_cast<size_t>(d.s * d.cout * d.ho * d.wo), T(0));
  {
    const T* xp = x.values().data();
    const T* wp = w.values().data();
    T* op = v.data();
    parallel_for(d.s * d.cout, [&](int64_t i) {
      const int64_t s = i / d.cout, co = i % d.cout;
      detail::conv2d_plane(xp, wp, op + i * d.ho * d.wo, d, s, co);
    });
  }
  auto out = op_result<T>(Shape{d.s, d.cout, d.ho, d.wo}, std::move(v),
                          {x.node, w.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                             wn = w.node.get(), d]() {
      xn->ensure_grad();
      wn->ensure_grad();
      const T* g = self->grad.data();
      const T* xv = xn->value.data();
      const T* wv = wn->value.data();
      T* dx = xn->grad.data();
      T* dw = wn->grad.data();
      parallel_for(d.s * d.cin, [&](int64_t i) {
        detail::conv2d_dx_plane(g, wv, dx + i * d.h * d.w, d, i / d.cin,
                                i % d.cin);
      });
      parallel_for(d.cout * d.cin, [&](int64_t i) {
        detail::conv2d_dw_tile(g, xv, dw, d, i / d.cin, i % d.cin);
      });
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> maxpool2d(const TensorT<T>& x, int64_t window, int64_t stride) {
  if (x.rank() != 4) throw std::invalid_argument("maxpool2d: input must be rank 4");
  if (window < 1 || stride < 1)
    throw std::invalid_argument("maxpool2d: bad window/stride");
  const int64_t S = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  if (window > H || window > W)
    throw std::invalid_argument("maxpool2d: window larger than input " +
                                x.shape().str());
  const int64_t Ho = (H - window) / stride + 1;
  const int64_t Wo = (W - window) / stride + 1;
  std::vector<T> v(static_cast<size_t>(S * C * Ho * Wo));
  auto argmax = std::make_shared<std::vector<int64_t>>(v.size());
  const T* xp = x.values().data();
  for (int64_t sc = 0; sc < S * C; ++sc) {
    const T* plane = xp + sc * H * W;
    for (int64_t oh = 0; oh < Ho; ++oh) {
      for (int64_t ow = 0; ow < Wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_idx = 0;
        for (int64_t kh = 0; kh < window; ++kh) {
          for (int64_t kw = 0; kw < window; ++kw) {
            const int64_t idx = (oh * stride + kh) * W + ow * stride + kw;
            if (plane[idx] > best) {
              best = plane[idx];
              best_idx = idx;
            }
          }
        }
        const size_t o = static_cast<size_t>((sc * Ho + oh) * Wo + ow);
        v[o] = best;
        (*argmax)[o] = sc * H * W + best_idx;
      }
    }
  }
  auto out = op_result<T>(Shape{S, C, Ho, Wo}, std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                             argmax]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        xn->grad[static_cast<size_t>((*argmax)[i])] += self->grad[i];
    };
  }
  return out;
}

// global spatial max: (S, C, H, W) -> (S, C)
template <typename T>
TensorT<T> global_maxpool2d(const TensorT<T>& x) {
  if (x.rank() != 4)
    throw std::invalid_argument("global_maxpool2d: input must be rank 4");
  const int64_t S = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  std::vector<T> v(static_cast<size_t>(S * C));
  auto argmax = std::make_shared<std::vector<int64_t>>(v.size());
  const T* xp = x.values().data();
  for (int64_t sc = 0; sc < S * C; ++sc) {
    const T* plane = xp + sc * HW;
    int64_t best = 0;
    for (int64_t i = 1; i < HW; ++i)
      if (plane[i] > plane[best]) best = i;
    v[static_cast<size_t>(sc)] = plane[best];
    (*argmax)[static_cast<size_t>(sc)] = sc * HW + best;
  }
  auto out = op_result<T>(Shape{S, C}, std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                             argmax]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        xn->grad[static_cast<size_t>((*argmax)[i])] += self->grad[i];
    };
  }
  return out;
}

// elementwise max over the slice axis: (S, D) -> (D)
template <typename T>
TensorT<T> slice_maxpool(const TensorT<T>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("slice_maxpool: input must be rank 2 (S, D)");
  const int64_t S = x.shape()[0], D = x.shape()[1];
  std::vector<T> v(static_cast<size_t>(D));
  auto argmax = std::make_shared<std::vector<int64_t>>(v.size());
  const T* xp = x.values().data();
  for (int64_t d = 0; d < D; ++d) {
    int64_t best = 0;
    for (int64_t s = 1; s < S; ++s)
      if (xp[s * D + d] > xp[best * D + d]) best = s;
    v[static_cast<size_t>(d)] = xp[best * D + d];
    (*argmax)[static_cast<size_t>(d)] = best * D + d;
  }
  auto out = op_result<T>(Shape{D}, std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                             argmax]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        xn->grad[static_cast<size_t>((*argmax)[i])] += self->grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// dense head
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matvec(const TensorT<T>& w, const TensorT<T>& v) {
  if (w.rank() != 2 || v.rank() != 1 || w.shape()[1] != v.shape()[0])
    throw std::invalid_argument("matvec: dimension mismatch " +
                                w.shape().str() + " x " + v.shape().str());
  const int64_t out_dim = w.shape()[0], in_dim = w.shape()[1];
  std::vector<T> y(static_cast<size_t>(out_dim), T(0));
  const T* wp = w.values().data();
  const T* vp = v.values().data();
  for (int64_t o = 0; o < out_dim; ++o) {
    T acc = T(0);
    for (int64_t i = 0; i < in_dim; ++i) acc += wp[o * in_dim + i] * vp[i];
    y[static_cast<size_t>(o)] = acc;
  }
  auto out = op_result<T>(Shape{out_dim}, std::move(y), {w.node, v.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), wn = w.node.get(),
                             vn = v.node.get(), out_dim, in_dim]() {
      wn->ensure_grad();
      vn->ensure_grad();
      for (int64_t o = 0; o < out_dim; ++o) {
        const T g = self->grad[static_cast<size_t>(o)];
        for (int64_t i = 0; i < in_dim; ++i) {
          wn->grad[static_cast<size_t>(o * in_dim + i)] += g * vn->value[static_cast<size_t>(i)];
          vn->grad[static_cast<size_t>(i)] += g * wn->value[static_cast<size_t>(o * in_dim + i)];
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> softmax_vec(const TensorT<T>& logits) {
  if (logits.rank() != 1)
    throw std::invalid_argument("softmax_vec: input must be rank 1");
  const auto& z = logits.values();
  T m = z[0];
  for (T v : z) m = std::max(m, v);
  std::vector<T> p(z.size());
  T denom = T(0);
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    denom += p[i];
  }
  for (auto& v : p) v /= denom;
  auto out = op_result<T>(logits.shape(), std::move(p), {logits.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), zn = logits.node.get()]() {
      zn->ensure_grad();
      T dot = T(0);
      for (size_t i = 0; i < self->grad.size(); ++i)
        dot += self->grad[i] * self->value[i];
      for (size_t i = 0; i < self->grad.size(); ++i)
        zn->grad[i] += self->value[i] * (self->grad[i] - dot);
    };
  }
  return out;
}

// loss = -log(probs[label]), probabilities clamped at 1e-12 so a confident
// mistake stays finite
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& probs, int64_t label) {
  if (probs.rank() != 1)
    throw std::invalid_argument("cross_entropy: probs must be rank 1");
  if (label < 0 || label >= probs.numel())
    throw std::invalid_argument("cross_entropy: invalid label " +
                                std::to_string(label));
  const T clamp = T(1e-12);
  const T p = std::max(probs.values()[static_cast<size_t>(label)], clamp);
  auto out = op_result<T>(Shape{1}, std::vector<T>{-std::log(p)}, {probs.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), pn = probs.node.get(),
                             label, clamp]() {
      pn->ensure_grad();
      const T pv = pn->value[static_cast<size_t>(label)];
      if (pv > clamp)
        pn->grad[static_cast<size_t>(label)] -= self->grad[0] / pv;
    };
  }
  return out;
}

template <typename T>
TensorT<T> linear_softmax(const TensorT<T>& v, const TensorT<T>& w,
                          const TensorT<T>& b) {
  return softmax_vec(add(matvec(w, v), b));
}

// ---------------------------------------------------------------------------
// dropout (inverted): train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval mode is the identity
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> dropout(const TensorT<T>& x, double rate, bool train,
                   uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) {
    auto out = op_result<T>(x.shape(), x.values(), {x.node});
    if (out.node->needs_grad) {
      out.node->backward_fn = [self = out.node.get(), xn = x.node.get()]() {
        xn->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i)
          xn->grad[i] += self->grad[i];
      };
    }
    return out;
  }
  Rng rng(seed);
  const T keep_scale = T(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<uint8_t>>(x.values().size());
  std::vector<T> v(x.values().size());
  for (size_t i = 0; i < v.size(); ++i) {
    const bool keep = rng.uniform() >= rate;
    (*mask)[i] = keep ? 1 : 0;
    v[i] = keep ? x.values()[i] * keep_scale : T(0);
  }
  auto out = op_result<T>(x.shape(), std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(), mask,
                             keep_scale]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        if ((*mask)[i]) xn->grad[i] += self->grad[i] * keep_scale;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// standardization kernels shared by the normalization layers
// ---------------------------------------------------------------------------

// Standardizes each contiguous group of `group_size` elements to zero mean and
// unit variance (biased variance, epsilon inside the square root). The slice
// variant uses group_size = C*H*W, the per-channel-plane variant H*W.
template <typename T>
TensorT<T> standardize_groups(const TensorT<T>& x, int64_t group_size, T eps) {
  if (eps <= T(0)) throw std::invalid_argument("standardize: eps must be > 0");
  const int64_t n = x.numel();
  if (group_size < 1 || n % group_size != 0)
    throw std::invalid_argument("standardize: group size does not divide input");
  const int64_t groups = n / group_size;
  std::vector<T> v(static_cast<size_t>(n));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(groups));
  const T* xp = x.values().data();
  for (int64_t g = 0; g < groups; ++g) {
    const T* gx = xp + g * group_size;
    T mean = T(0);
    for (int64_t i = 0; i < group_size; ++i) mean += gx[i];
    mean /= static_cast<T>(group_size);
    T var = T(0);
    for (int64_t i = 0; i < group_size; ++i) {
      const T dlt = gx[i] - mean;
      var += dlt * dlt;
    }
    var /= static_cast<T>(group_size);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(g)] = is;
    T* gy = v.data() + g * group_size;
    for (int64_t i = 0; i < group_size; ++i) gy[i] = (gx[i] - mean) * is;
  }
  auto out = op_result<T>(x.shape(), std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(), inv_std,
                             group_size, groups]() {
      xn->ensure_grad();
      for (int64_t g = 0; g < groups; ++g) {
        const T* gg = self->grad.data() + g * group_size;
        const T* gy = self->value.data() + g * group_size;  // = x_hat
        T* gdx = xn->grad.data() + g * group_size;
        T gmean = T(0), gdot = T(0);
        for (int64_t i = 0; i < group_size; ++i) {
          gmean += gg[i];
          gdot += gg[i] * gy[i];
        }
        gmean /= static_cast<T>(group_size);
        gdot /= static_cast<T>(group_size);
        const T is = (*inv_std)[static_cast<size_t>(g)];
        for (int64_t i = 0; i < group_size; ++i)
          gdx[i] += is * (gg[i] - gmean - gy[i] * gdot);
      }
    };
  }
  return out;
}

// y[s,c,h,w] = x[s,c,h,w] * gamma[c]
template <typename T>
TensorT<T> channel_scale(const TensorT<T>& x, const TensorT<T>& gamma) {
  if (x.rank() != 4 || gamma.rank() != 1 || gamma.shape()[0] != x.shape()[1])
    throw std::invalid_argument("channel_scale: shape mismatch " +
                                x.shape().str() + " vs " + gamma.shape().str());
  const int64_t S = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  std::vector<T> v(x.values().size());
  const T* xp = x.values().data();
  const T* gp = gamma.values().data();
  for (int64_t s = 0; s < S; ++s)
    for (int64_t c = 0; c < C; ++c) {
      const T gm = gp[c];
      const int64_t base = (s * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) v[static_cast<size_t>(base + i)] = xp[base + i] * gm;
    }
  auto out = op_result<T>(x.shape(), std::move(v), {x.node, gamma.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                             gn = gamma.node.get(), S, C, HW]() {
      xn->ensure_grad();
      gn->ensure_grad();
      for (int64_t s = 0; s < S; ++s)
        for (int64_t c = 0; c < C; ++c) {
          const int64_t base = (s * C + c) * HW;
          const T gm = gn->value[static_cast<size_t>(c)];
          T acc = T(0);
          for (int64_t i = 0; i < HW; ++i) {
            const size_t j = static_cast<size_t>(base + i);
            xn->grad[j] += self->grad[j] * gm;
            acc += self->grad[j] * xn->value[j];
          }
          gn->grad[static_cast<size_t>(c)] += acc;
        }
    };
  }
  return out;
}

// y[s,c,h,w] = x[s,c,h,w] + beta[c]
template <typename T>
TensorT<T> channel_bias(const TensorT<T>& x, const TensorT<T>& beta) {
  if (x.rank() != 4 || beta.rank() != 1 || beta.shape()[0] != x.shape()[1])
    throw std::invalid_argument("channel_bias: shape mismatch " +
                                x.shape().str() + " vs " + beta.shape().str());
  const int64_t S = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  std::vector<T> v(x.values().size());
  const T* xp = x.values().data();
  const T* bp = beta.values().data();
  for (int64_t s = 0; s < S; ++s)
    for (int64_t c = 0; c < C; ++c) {
      const T b = bp[c];
      const int64_t base = (s * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) v[static_cast<size_t>(base + i)] = xp[base + i] + b;
    }
  auto out = op_result<T>(x.shape(), std::move(v), {x.node, beta.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                             bn = beta.node.get(), S, C, HW]() {
      xn->ensure_grad();
      bn->ensure_grad();
      for (int64_t s = 0; s < S; ++s)
        for (int64_t c = 0; c < C; ++c) {
          const int64_t base = (s * C + c) * HW;
          T acc = T(0);
          for (int64_t i = 0; i < HW; ++i) {
            const size_t j = static_cast<size_t>(base + i);
            xn->grad[j] += self->grad[j];
            acc += self->grad[j];
          }
          bn->grad[static_cast<size_t>(c)] += acc;
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch normalization across slices (ablation path): per channel over
// (S, H, W) jointly in train mode, running statistics in eval mode
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(int64_t channels = 0)
      : running_mean(static_cast<size_t>(channels), T(0)),
        running_var(static_cast<size_t>(channels), T(1)) {}
};

template <typename T>
TensorT<T> batchnorm_standardize(const TensorT<T>& x, BatchNormState<T>& state,
                                 bool train, T eps = T(1e-8),
                                 T momentum = T(0.1)) {
  if (x.rank() != 4)
    throw std::invalid_argument("batchnorm: input must be rank 4");
  const int64_t S = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  if (static_cast<int64_t>(state.running_mean.size()) != C)
    throw std::invalid_argument("batchnorm: state channel mismatch");
  const int64_t n = S * HW;
  std::vector<T> v(x.values().size());
  const T* xp = x.values().data();

  if (!train) {
    // linear map per channel
    std::vector<T> scale_c(static_cast<size_t>(C)), shift_c(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
      const T is = T(1) / std::sqrt(state.running_var[static_cast<size_t>(c)] + eps);
      scale_c[static_cast<size_t>(c)] = is;
      shift_c[static_cast<size_t>(c)] = -state.running_mean[static_cast<size_t>(c)] * is;
    }
    for (int64_t s = 0; s < S; ++s)
      for (int64_t c = 0; c < C; ++c) {
        const int64_t base = (s * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i)
          v[static_cast<size_t>(base + i)] =
              xp[base + i] * scale_c[static_cast<size_t>(c)] + shift_c[static_cast<size_t>(c)];
      }
    auto out = op_result<T>(x.shape(), std::move(v), {x.node});
    if (out.node->needs_grad) {
      out.node->backward_fn = [self = out.node.get(), xn = x.node.get(),
                               scale_c, S, C, HW]() {
        xn->ensure_grad();
        for (int64_t s = 0; s < S; ++s)
          for (int64_t c = 0; c < C; ++c) {
            const int64_t base = (s * C + c) * HW;
            const T is = scale_c[static_cast<size_t>(c)];
            for (int64_t i = 0; i < HW; ++i)
              xn->grad[static_cast<size_t>(base + i)] += self->grad[static_cast<size_t>(base + i)] * is;
          }
      };
    }
    return out;
  }

  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    T mean = T(0);
    for (int64_t s = 0; s < S; ++s) {
      const T* p = xp + (s * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) mean += p[i];
    }
    mean /= static_cast<T>(n);
    T var = T(0);
    for (int64_t s = 0; s < S; ++s) {
      const T* p = xp + (s * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const T dlt = p[i] - mean;
        var += dlt * dlt;
      }
    }
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(c)] = is;
    for (int64_t s = 0; s < S; ++s) {
      const T* p = xp + (s * C + c) * HW;
      T* q = v.data() + (s * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) q[i] = (p[i] - mean) * is;
    }
    state.running_mean[static_cast<size_t>(c)] =
        (T(1) - momentum) * state.running_mean[static_cast<size_t>(c)] + momentum * mean;
    state.running_var[static_cast<size_t>(c)] =
        (T(1) - momentum) * state.running_var[static_cast<size_t>(c)] + momentum * var;
  }
  auto out = op_result<T>(x.shape(), std::move(v), {x.node});
  if (out.node->needs_grad) {
    out.node->backward_fn = [self = out.node.get(), xn = x.node.get(), inv_std,
                             S, C, HW, n]() {
      xn->ensure_grad();
      for (int64_t c = 0; c < C; ++c) {
        T gmean = T(0), gdot = T(0);
        for (int64_t s = 0; s < S; ++s) {
          const int64_t base = (s * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            const size_t j = static_cast<size_t>(base + i);
            gmean += self->grad[j];
            gdot += self->grad[j] * self->value[j];
          }
        }
        gmean /= static_cast<T>(n);
        gdot /= static_cast<T>(n);
        const T is = (*inv_std)[static_cast<size_t>(c)];
        for (int64_t s = 0; s < S; ++s) {
          const int64_t base = (s * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            const size_t j = static_cast<size_t>(base + i);
            xn->grad[j] += is * (self->grad[j] - gmean - self->value[j] * gdot);
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> batchnorm_slices(const TensorT<T>& x, const TensorT<T>& gamma,
                            const TensorT<T>& beta, BatchNormState<T>& state,
                            bool train, T eps = T(1e-8), T momentum = T(0.1)) {
  return channel_bias(channel_scale(batchnorm_standardize(x, state, train, eps,
                                                          momentum),
                                    gamma),
                      beta);
}

}  // namespace elnet
