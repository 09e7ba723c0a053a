#include "elnet/standardize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace elnet {

const std::vector<double>& standard_percentiles() {
  static const std::vector<double> p = {1,  10, 20, 30, 40, 50,
                                        60, 70, 80, 90, 99};
  return p;
}

double percentile_sorted(const std::vector<float>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile: empty data");
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) * (1.0 - frac) +
         static_cast<double>(sorted[hi]) * frac;
}

std::vector<double> volume_landmarks(const Volume& v) {
  std::vector<float> sorted = v.data;
  std::sort(sorted.begin(), sorted.end());
  const auto& ps = standard_percentiles();
  std::vector<double> lm(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) lm[i] = percentile_sorted(sorted, ps[i]);
  return lm;
}

StandardScale learn_standard_scale(const std::vector<Volume>& training) {
  if (training.empty())
    throw std::invalid_argument("learn_standard_scale: need >= 1 training volume");
  const auto& ps = standard_percentiles();
  std::vector<double> acc(ps.size(), 0.0);
  for (const Volume& v : training) {
    const std::vector<double> lm = volume_landmarks(v);
    const double span = lm.back() - lm.front();
    if (!(span > 0.0))
      throw std::invalid_argument(
          "learn_standard_scale: volume " + v.exam_id +
          " has zero dynamic range between the tail percentiles");
    for (size_t i = 0; i < lm.size(); ++i)
      acc[i] += (lm[i] - lm.front()) / span;
  }
  StandardScale scale;
  scale.percentiles = ps;
  scale.landmarks.resize(acc.size());
  for (size_t i = 0; i < acc.size(); ++i)
    scale.landmarks[i] = acc[i] / static_cast<double>(training.size());
  for (size_t i = 1; i < scale.landmarks.size(); ++i)
    if (!(scale.landmarks[i] > scale.landmarks[i - 1]))
      throw std::invalid_argument(
          "learn_standard_scale: landmarks are not strictly increasing");
  return scale;
}

IntensityMap build_intensity_map(const std::vector<double>& volume_landmarks,
                                 const StandardScale& scale) {
  if (scale.landmarks.size() != scale.percentiles.size() ||
      scale.landmarks.size() < 2)
    throw std::invalid_argument("standardization: scale not learned");
  if (volume_landmarks.size() != scale.landmarks.size())
    throw std::invalid_argument("standardization: landmark count mismatch");
  const std::vector<double>& vx = volume_landmarks;
  const std::vector<double>& sy = scale.landmarks;

  // merge degenerate (flat-histogram) landmark nodes so segments keep
  // positive width; the map stays monotone non-decreasing
  IntensityMap map;
  map.x.reserve(vx.size());
  map.y.reserve(vx.size());
  for (size_t i = 0; i < vx.size(); ++i) {
    if (!map.x.empty() && !(vx[i] > map.x.back())) {
      map.y.back() = std::max(map.y.back(), sy[i]);
      continue;
    }
    map.x.push_back(vx[i]);
    map.y.push_back(sy[i]);
  }
  if (map.x.size() < 2)
    throw std::invalid_argument("standardization: degenerate landmarks");
  return map;
}

double IntensityMap::operator()(double t) const {
  const size_t nseg = x.size() - 1;
  size_t seg;
  if (t <= x.front()) {
    seg = 0;  // extrapolate with the first segment slope
  } else if (t >= x.back()) {
    seg = nseg - 1;  // extrapolate with the last segment slope
  } else {
    seg = static_cast<size_t>(std::upper_bound(x.begin(), x.end(), t) -
                              x.begin()) - 1;
    if (seg >= nseg) seg = nseg - 1;
  }
  const double slope = (y[seg + 1] - y[seg]) / (x[seg + 1] - x[seg]);
  const double out = y[seg] + (t - x[seg]) * slope;
  return std::min(1.0, std::max(0.0, out));
}

Volume apply_standardization(const Volume& v, const StandardScale& scale) {
  const IntensityMap map = build_intensity_map(volume_landmarks(v), scale);
  Volume out = v;
  for (float& f : out.data)
    f = static_cast<float>(map(static_cast<double>(f)));
  return out;
}

}  // namespace elnet
