#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "elnet/model.hpp"

namespace elnet {

// Per-volume saliency: non-negative heat normalized to [0, 1], plus one
// aggregate score per slice (sum of pixel heat).
struct HeatmapVolume {
  int64_t s = 0, h = 0, w = 0;
  std::vector<float> heat;           // (S, H, W)
  std::vector<double> slice_scores;  // (S)

  float at(int64_t si, int64_t y, int64_t x) const {
    return heat[static_cast<size_t>((si * h + y) * w + x)];
  }
};

namespace detail {

// |v| then min-max rescale over the whole map; a constant map rescales to 0
template <typename T>
std::vector<double> abs_minmax(const std::vector<T>& grad,
                               const std::vector<T>& coef_broadcast) {
  std::vector<double> out(grad.size());
  for (size_t i = 0; i < grad.size(); ++i)
    out[i] = std::fabs(static_cast<double>(grad[i]) *
                       static_cast<double>(coef_broadcast[i]));
  double lo = out[0], hi = out[0];
  for (double v : out) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    for (double& v : out) v = (v - lo) / (hi - lo);
  } else {
    for (double& v : out) v = 0.0;
  }
  return out;
}

// half-pixel-center bilinear upsample of one (h, w) plane to (H, W)
inline void upsample_add(const double* src, int64_t h, int64_t w, double* dst,
                         int64_t th, int64_t tw) {
  if (h == th && w == tw) {
    for (int64_t i = 0; i < th * tw; ++i) dst[i] += src[i];
    return;
  }
  const double sy_scale = static_cast<double>(h) / static_cast<double>(th);
  const double sx_scale = static_cast<double>(w) / static_cast<double>(tw);
  for (int64_t y = 0; y < th; ++y) {
    double sy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
    const int64_t y0 = static_cast<int64_t>(sy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (int64_t x = 0; x < tw; ++x) {
      double sx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
      const int64_t x0 = static_cast<int64_t>(sx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      dst[y * tw + x] += src[y0 * w + x0] * (1 - fy) * (1 - fx) +
                         src[y0 * w + x1] * (1 - fy) * fx +
                         src[y1 * w + x0] * fy * (1 - fx) +
                         src[y1 * w + x1] * fy * fx;
    }
  }
}

}  // namespace detail

// Full-gradient saliency. Decomposes the target-class logit into the
// input-gradient term and per-layer bias-gradient terms (normalization betas
// and the classifier bias), post-processes each term with
// abs -> per-layer min-max rescale -> bilinear upsample -> channel sum, and
// accumulates everything into one (S, H, W) heat volume normalized to [0, 1].
// Dropout runs in eval mode, so the result is deterministic.
template <typename T>
HeatmapVolume fullgrad(ModelT<T>& model, const TensorT<T>& volume,
                       int64_t target_class) {
  if (target_class < 0 || target_class > 1)
    throw std::invalid_argument("fullgrad: target class must be 0 or 1");
  if (volume.rank() != 4 || volume.shape()[1] != 1)
    throw std::invalid_argument("fullgrad: expected (S, 1, H, W), got " +
                                volume.shape().str());
  const int64_t S = volume.shape()[0], H = volume.shape()[2], W = volume.shape()[3];

  TensorT<T> x = volume.clone_detached(/*requires_grad=*/true);
  ForwardTrace<T> trace;
  auto result = model.forward(x, /*train=*/false, 0, &trace);
  (void)result;
  auto target = pick(trace.logits, target_class);
  backward(target);

  std::vector<double> heat(static_cast<size_t>(S * H * W), 0.0);

  // input-gradient term: psi(grad_x . x), already at input resolution
  {
    const auto psi = detail::abs_minmax(x.grad(), x.values());
    for (int64_t i = 0; i < S * H * W; ++i) heat[static_cast<size_t>(i)] += psi[static_cast<size_t>(i)];
  }

  for (const auto& site : trace.bias_sites) {
    if (site.out.rank() == 4) {
      const int64_t C = site.out.shape()[1], h = site.out.shape()[2],
                    w = site.out.shape()[3];
      // broadcast the per-channel bias over the site map
      std::vector<T> coef(site.out.values().size());
      for (int64_t s = 0; s < S; ++s)
        for (int64_t c = 0; c < C; ++c) {
          const T b = site.bias.values()[static_cast<size_t>(c)];
          const int64_t base = (s * C + c) * h * w;
          for (int64_t i = 0; i < h * w; ++i) coef[static_cast<size_t>(base + i)] = b;
        }
      const auto psi = detail::abs_minmax(site.out.grad(), coef);
      for (int64_t s = 0; s < S; ++s)
        for (int64_t c = 0; c < C; ++c)
          detail::upsample_add(psi.data() + (s * C + c) * h * w, h, w,
                               heat.data() + s * H * W, H, W);
    } else {
      // classifier bias has no spatial or slice extent; its contribution
      // spreads uniformly over the volume
      const auto psi = detail::abs_minmax(site.out.grad(), site.bias.values());
      double total = 0.0;
      for (double v : psi) total += v;
      for (double& v : heat) v += total;
    }
  }

  HeatmapVolume out;
  out.s = S;
  out.h = H;
  out.w = W;
  double peak = 0.0;
  for (double v : heat) peak = std::max(peak, v);
  out.heat.resize(heat.size());
  for (size_t i = 0; i < heat.size(); ++i)
    out.heat[i] = static_cast<float>(peak > 0.0 ? heat[i] / peak : 0.0);
  out.slice_scores.assign(static_cast<size_t>(S), 0.0);
  for (int64_t s = 0; s < S; ++s) {
    double acc = 0.0;
    for (int64_t i = 0; i < H * W; ++i)
      acc += static_cast<double>(out.heat[static_cast<size_t>(s * H * W + i)]);
    out.slice_scores[static_cast<size_t>(s)] = acc;
  }
  return out;
}

// argmax of the per-slice heat totals; ties break to the lowest index
inline int64_t most_informative_slice(const HeatmapVolume& h) {
  if (h.slice_scores.empty())
    throw std::invalid_argument("most_informative_slice: empty heatmap");
  int64_t best = 0;
  for (size_t i = 1; i < h.slice_scores.size(); ++i)
    if (h.slice_scores[i] > h.slice_scores[static_cast<size_t>(best)])
      best = static_cast<int64_t>(i);
  return best;
}

// one 8-bit grayscale PGM (P5) per slice plus a JSON sidecar with the
// per-slice scores and the selected slice
void write_heatmap_files(const HeatmapVolume& h, int64_t target_class,
                         const std::string& out_dir);

}  // namespace elnet
