#include "elnet/augment.hpp"

#include <cmath>
#include <stdexcept>

#include "elnet/rng.hpp"

namespace elnet {

namespace {

// quarter-turn clockwise index rotations, exact for right angles
Volume rot90(const Volume& v, int quarter_turns) {
  const int r = ((quarter_turns % 4) + 4) % 4;
  if (r == 0) return v;
  Volume out = v;
  if (r == 2) {
    for (int64_t s = 0; s < v.s; ++s)
      for (int64_t y = 0; y < v.h; ++y)
        for (int64_t x = 0; x < v.w; ++x)
          out.at(s, y, x) = v.at(s, v.h - 1 - y, v.w - 1 - x);
    return out;
  }
  if (v.h != v.w)
    throw std::invalid_argument("rot90: quarter turns need square slices");
  for (int64_t s = 0; s < v.s; ++s)
    for (int64_t y = 0; y < v.h; ++y)
      for (int64_t x = 0; x < v.w; ++x)
        out.at(s, y, x) = (r == 1) ? v.at(s, v.h - 1 - x, y)
                                   : v.at(s, x, v.w - 1 - y);
  return out;
}

Volume hflip(const Volume& v) {
  Volume out = v;
  for (int64_t s = 0; s < v.s; ++s)
    for (int64_t y = 0; y < v.h; ++y)
      for (int64_t x = 0; x < v.w; ++x)
        out.at(s, y, x) = v.at(s, y, v.w - 1 - x);
  return out;
}

// output pixel -> input coords via the inverse map, bilinear with zero fill
Volume affine_resample(const Volume& v, double zoom, double angle_deg,
                       double dx, double dy) {
  Volume out = v;
  const double cy = static_cast<double>(v.h - 1) / 2.0;
  const double cx = static_cast<double>(v.w - 1) / 2.0;
  const double theta = -angle_deg * M_PI / 180.0;  // inverse rotation
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int64_t y = 0; y < v.h; ++y) {
    for (int64_t x = 0; x < v.w; ++x) {
      const double ox = static_cast<double>(x) - cx - dx;
      const double oy = static_cast<double>(y) - cy - dy;
      const double sx = (ct * ox - st * oy) / zoom + cx;
      const double sy = (st * ox + ct * oy) / zoom + cy;
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const int64_t y0 = static_cast<int64_t>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      for (int64_t s = 0; s < v.s; ++s) {
        auto sample = [&](int64_t yy, int64_t xx) -> double {
          if (yy < 0 || yy >= v.h || xx < 0 || xx >= v.w) return 0.0;
          return static_cast<double>(v.at(s, yy, xx));
        };
        const double val = sample(y0, x0) * (1 - fy) * (1 - fx) +
                           sample(y0, x0 + 1) * (1 - fy) * fx +
                           sample(y0 + 1, x0) * fy * (1 - fx) +
                           sample(y0 + 1, x0 + 1) * fy * fx;
        out.at(s, y, x) = static_cast<float>(val);
      }
    }
  }
  return out;
}

}  // namespace

Volume augment(const Volume& v, const AugmentSpec& spec) {
  if (spec.scale_lo > spec.scale_hi || spec.scale_lo <= 0.0)
    throw std::invalid_argument("augment: bad scale range");
  Rng rng(spec.seed);
  // fixed draw order so streams stay comparable across spec tweaks
  const double dx = rng.uniform(-spec.max_translate_frac, spec.max_translate_frac) *
                    static_cast<double>(v.w);
  const double dy = rng.uniform(-spec.max_translate_frac, spec.max_translate_frac) *
                    static_cast<double>(v.h);
  const double zoom = rng.uniform(spec.scale_lo, spec.scale_hi);
  const double angle = rng.uniform(-spec.max_rotate_deg, spec.max_rotate_deg);
  const bool flip = rng.bernoulli(spec.hflip_prob);
  int quarters = 0;
  if (spec.right_angle &&
      (v.orientation == Orientation::axial || v.orientation == Orientation::coronal)) {
    quarters = static_cast<int>(rng.uniform_int(4));
    if (v.h != v.w && (quarters % 2) != 0) quarters = 0;  // keep the shape
  }

  Volume out = flip ? hflip(v) : v;
  const bool continuous = dx != 0.0 || dy != 0.0 || zoom != 1.0 || angle != 0.0;
  if (continuous) out = affine_resample(out, zoom, angle, dx, dy);
  if (quarters != 0) out = rot90(out, quarters);
  return out;
}

Volume resize_volume(const Volume& v, int64_t target_h, int64_t target_w) {
  if (target_h < 1 || target_w < 1)
    throw std::invalid_argument("resize_volume: bad target size");
  if (target_h == v.h && target_w == v.w) return v;
  Volume out;
  out.s = v.s;
  out.h = target_h;
  out.w = target_w;
  out.orientation = v.orientation;
  out.exam_id = v.exam_id;
  out.data.assign(static_cast<size_t>(v.s * target_h * target_w), 0.0f);
  const double sy_scale = static_cast<double>(v.h) / static_cast<double>(target_h);
  const double sx_scale = static_cast<double>(v.w) / static_cast<double>(target_w);
  for (int64_t y = 0; y < target_h; ++y) {
    // half-pixel centers, clamped at the borders
    double sy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(v.h - 1));
    const int64_t y0 = static_cast<int64_t>(sy);
    const int64_t y1 = std::min(y0 + 1, v.h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (int64_t x = 0; x < target_w; ++x) {
      double sx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(v.w - 1));
      const int64_t x0 = static_cast<int64_t>(sx);
      const int64_t x1 = std::min(x0 + 1, v.w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (int64_t s = 0; s < v.s; ++s) {
        const double val =
            static_cast<double>(v.at(s, y0, x0)) * (1 - fy) * (1 - fx) +
            static_cast<double>(v.at(s, y0, x1)) * (1 - fy) * fx +
            static_cast<double>(v.at(s, y1, x0)) * fy * (1 - fx) +
            static_cast<double>(v.at(s, y1, x1)) * fy * fx;
        out.at(s, y, x) = static_cast<float>(val);
      }
    }
  }
  return out;
}

}  // namespace elnet
