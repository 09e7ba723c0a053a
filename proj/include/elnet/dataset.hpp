#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "elnet/synth.hpp"
#include "elnet/volume.hpp"

namespace elnet {

// In-memory labeled exam collection for one pathology.
struct Dataset {
  std::vector<Volume> volumes;
  std::vector<int> labels;
  std::vector<std::pair<int64_t, int64_t>> lesion_ranges;  // [-1,-1] if unknown
  std::string pathology;

  size_t size() const { return volumes.size(); }
};

// On-disk layout produced by the synthesizer and accepted by the loader:
//   <dir>/volumes/<exam_id>.npy      rank-3 little-endian arrays
//   <dir>/labels-<pathology>.csv     header "exam_id,label"
//   <dir>/manifest.json              seeds, shapes, labels, lesion ranges
void write_synth_dataset(const std::string& dir, const SynthSpec& spec,
                         const std::string& pathology = "lesion");

// Loads a dataset directory. Volumes are looked up under, in order:
// <dir>/<orientation>/, <dir>/volumes/, <dir> itself. Per-volume orientation
// comes from the manifest when present, else `orientation`.
Dataset load_dataset(const std::string& dir, const std::string& pathology,
                     Orientation orientation);

// labels CSV helpers
std::vector<std::pair<std::string, int>> read_labels_csv(const std::string& path);
void write_labels_csv(const std::string& path,
                      const std::vector<std::pair<std::string, int>>& rows);

// Oversampling for class balance: every index once, plus minority indices
// re-drawn uniformly (with repeats) until both classes have equal counts.
std::vector<int64_t> oversample_indices(const std::vector<int>& labels,
                                        uint64_t seed);

}  // namespace elnet
