#pragma once

#include <cstdint>

#include "elnet/volume.hpp"

namespace elnet {

// One randomized rigid-ish transform sampled per call, applied identically to
// every slice of the volume. The continuous part (translate / scale / rotate
// up to the bound) resamples bilinearly with zero fill; horizontal flip and
// the right-angle rotation are exact index permutations. Right-angle
// rotations apply only to axial/coronal volumes (and need square slices for
// the 90/270 cases).
struct AugmentSpec {
  double max_translate_frac = 0.10;  // of width/height
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double max_rotate_deg = 10.0;
  double hflip_prob = 0.5;
  bool right_angle = true;
  uint64_t seed = 0;

  static AugmentSpec identity() {
    AugmentSpec s;
    s.max_translate_frac = 0.0;
    s.scale_lo = s.scale_hi = 1.0;
    s.max_rotate_deg = 0.0;
    s.hflip_prob = 0.0;
    s.right_angle = false;
    return s;
  }
};

Volume augment(const Volume& v, const AugmentSpec& spec);

// Per-slice bilinear resize; identity when the size already matches.
Volume resize_volume(const Volume& v, int64_t target_h, int64_t target_w);

}  // namespace elnet
