#include "elnet/synth.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "elnet/rng.hpp"

namespace elnet {

namespace {

// separable 3D gaussian bump added in place
void add_blob(Volume& v, Rng& rng, double amp_lo, double amp_hi) {
  const double amp = rng.uniform(amp_lo, amp_hi);
  const double cs = rng.uniform(0.0, static_cast<double>(v.s - 1));
  const double cy = rng.uniform(0.0, static_cast<double>(v.h - 1));
  const double cx = rng.uniform(0.0, static_cast<double>(v.w - 1));
  const double ss = rng.uniform(1.0, std::max(1.5, static_cast<double>(v.s) * 0.6));
  const double sy = rng.uniform(0.12, 0.35) * static_cast<double>(v.h);
  const double sx = rng.uniform(0.12, 0.35) * static_cast<double>(v.w);

  std::vector<double> es(static_cast<size_t>(v.s)), ey(static_cast<size_t>(v.h)),
      ex(static_cast<size_t>(v.w));
  for (int64_t i = 0; i < v.s; ++i) {
    const double d = (static_cast<double>(i) - cs) / ss;
    es[static_cast<size_t>(i)] = std::exp(-0.5 * d * d);
  }
  for (int64_t i = 0; i < v.h; ++i) {
    const double d = (static_cast<double>(i) - cy) / sy;
    ey[static_cast<size_t>(i)] = std::exp(-0.5 * d * d);
  }
  for (int64_t i = 0; i < v.w; ++i) {
    const double d = (static_cast<double>(i) - cx) / sx;
    ex[static_cast<size_t>(i)] = std::exp(-0.5 * d * d);
  }
  for (int64_t s = 0; s < v.s; ++s) {
    const double as = amp * es[static_cast<size_t>(s)];
    for (int64_t y = 0; y < v.h; ++y) {
      const double ay = as * ey[static_cast<size_t>(y)];
      float* row = &v.at(s, y, 0);
      for (int64_t x = 0; x < v.w; ++x)
        row[x] += static_cast<float>(ay * ex[static_cast<size_t>(x)]);
    }
  }
}

}  // namespace

std::vector<SynthExample> synth_dataset(const SynthSpec& spec) {
  if (spec.n < 0 || spec.slices < 1 || spec.height < 4 || spec.width < 4)
    throw std::invalid_argument("synth_dataset: bad dimensions");
  if (spec.lesion_rate < 0.0 || spec.lesion_rate > 1.0)
    throw std::invalid_argument("synth_dataset: lesion rate must be in [0, 1]");

  std::vector<SynthExample> out;
  out.reserve(static_cast<size_t>(spec.n));
  for (int64_t i = 0; i < spec.n; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(i)));
    SynthExample ex;
    Volume& v = ex.volume;
    v.s = spec.slices;
    v.h = spec.height;
    v.w = spec.width;
    v.orientation = spec.orientation;
    char id[32];
    std::snprintf(id, sizeof(id), "%04lld", static_cast<long long>(i));
    v.exam_id = id;
    v.data.assign(static_cast<size_t>(v.numel()), 0.0f);

    const int64_t nblobs = 2 + rng.uniform_int(4);
    for (int64_t b = 0; b < nblobs; ++b) add_blob(v, rng, 0.08, 0.30);
    for (float& f : v.data) f += static_cast<float>(rng.uniform(0.0, 0.02));

    ex.label = rng.bernoulli(spec.lesion_rate) ? 1 : 0;
    if (ex.label) {
      const int64_t span = std::min<int64_t>(2 + rng.uniform_int(3), v.s);
      const int64_t lo = rng.uniform_int(v.s - span + 1);
      const int64_t hi = lo + span - 1;
      ex.lesion_lo = lo;
      ex.lesion_hi = hi;
      const double cs = (static_cast<double>(lo) + static_cast<double>(hi)) / 2.0;
      const double as = static_cast<double>(span) / 2.0 + 0.25;
      // keep the lesion away from the frame so augmentation cannot push it out
      const double cy = rng.uniform(0.30, 0.70) * static_cast<double>(v.h - 1);
      const double cx = rng.uniform(0.30, 0.70) * static_cast<double>(v.w - 1);
      const double ry = rng.uniform(1.0 / 7.0, 1.0 / 4.0) * static_cast<double>(v.h);
      const double rx = rng.uniform(1.0 / 7.0, 1.0 / 4.0) * static_cast<double>(v.w);
      const double amp = rng.uniform(1.2, 1.8);
      ex.center[0] = cs;
      ex.center[1] = cy;
      ex.center[2] = cx;
      ex.radii[0] = as;
      ex.radii[1] = ry;
      ex.radii[2] = rx;
      for (int64_t s = lo; s <= hi; ++s) {
        const double ds = (static_cast<double>(s) - cs) / as;
        for (int64_t y = 0; y < v.h; ++y) {
          const double dy = (static_cast<double>(y) - cy) / ry;
          for (int64_t x = 0; x < v.w; ++x) {
            const double dx = (static_cast<double>(x) - cx) / rx;
            const double r2 = ds * ds + dy * dy + dx * dx;
            if (r2 < 1.0) v.at(s, y, x) += static_cast<float>(amp * (1.0 - r2));
          }
        }
      }
    }

    // per-exam brightness/contrast variation, normalized away downstream by
    // the intensity standardization
    const float gain = static_cast<float>(rng.uniform(0.8, 1.2));
    const float offset = static_cast<float>(rng.uniform(0.0, 0.1));
    for (float& f : v.data) f = f * gain + offset;

    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace elnet
