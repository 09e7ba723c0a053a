#pragma once

#include <cstdint>
#include <vector>

#include "elnet/volume.hpp"

namespace elnet {

// Desk-scale synthetic exams. Negative volumes are smooth random blob
// backgrounds; positive volumes add one bright ellipsoidal lesion spanning
// 2-4 consecutive slices at a random in-frame location.
struct SynthSpec {
  int64_t n = 100;
  int64_t slices = 8;
  int64_t height = 128;
  int64_t width = 128;
  double lesion_rate = 0.5;
  uint64_t seed = 0;
  Orientation orientation = Orientation::axial;
};

struct SynthExample {
  Volume volume;
  int label = 0;
  // ground-truth lesion slice range, inclusive; [-1, -1] for negatives
  int64_t lesion_lo = -1;
  int64_t lesion_hi = -1;
  // ellipsoid parameters (center / semi-axes in (s, y, x) order), for
  // voxel-level verification; zeros for negatives
  double center[3] = {0, 0, 0};
  double radii[3] = {0, 0, 0};

  bool in_lesion(int64_t s, int64_t y, int64_t x) const {
    if (label == 0) return false;
    const double ds = (static_cast<double>(s) - center[0]) / radii[0];
    const double dy = (static_cast<double>(y) - center[1]) / radii[1];
    const double dx = (static_cast<double>(x) - center[2]) / radii[2];
    return ds * ds + dy * dy + dx * dx < 1.0;
  }
};

std::vector<SynthExample> synth_dataset(const SynthSpec& spec);

}  // namespace elnet
