#pragma once

#include <vector>

#include "elnet/volume.hpp"

namespace elnet {

// Histogram-landmark intensity standardization. Landmarks sit at the fixed
// percentiles {1, 10, 20, ..., 90, 99}; the standard scale lives on [0, 1].
// Learning rescales each training volume's landmarks linearly onto [0, 1]
// (p1 -> 0, p99 -> 1) and averages them; applying maps a volume's own
// landmarks onto the standard ones piecewise-linearly and clamps to [0, 1].
struct StandardScale {
  std::vector<double> percentiles;  // fixed positions, percent
  std::vector<double> landmarks;    // learned values, strictly increasing in [0, 1]
};

const std::vector<double>& standard_percentiles();

// Percentile with linear interpolation at position q/100 * (n-1).
double percentile_sorted(const std::vector<float>& sorted, double q);

std::vector<double> volume_landmarks(const Volume& v);

StandardScale learn_standard_scale(const std::vector<Volume>& training);

// The monotone piecewise-linear intensity map for one volume: sends the
// volume's landmark values onto the standard ones, extrapolates the end
// segments, clamps to [0, 1]. Degenerate (flat-histogram) nodes are merged.
struct IntensityMap {
  std::vector<double> x;  // merged volume landmarks, strictly increasing
  std::vector<double> y;  // corresponding standard values

  double operator()(double t) const;
};

IntensityMap build_intensity_map(const std::vector<double>& volume_landmarks,
                                 const StandardScale& scale);

Volume apply_standardization(const Volume& v, const StandardScale& scale);

}  // namespace elnet
