#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "elnet/tensor.hpp"

namespace elnet {

enum class Orientation { axial, coronal, sagittal };

inline const char* to_string(Orientation o) {
  switch (o) {
    case Orientation::axial: return "axial";
    case Orientation::coronal: return "coronal";
    case Orientation::sagittal: return "sagittal";
  }
  return "?";
}

inline Orientation orientation_from_string(const std::string& s) {
  if (s == "axial") return Orientation::axial;
  if (s == "coronal") return Orientation::coronal;
  if (s == "sagittal") return Orientation::sagittal;
  throw std::invalid_argument("unknown orientation: " + s);
}

// One exam: S grayscale slices of H x W intensities.
struct Volume {
  int64_t s = 0, h = 0, w = 0;
  std::vector<float> data;  // (S, H, W) C-order
  Orientation orientation = Orientation::sagittal;
  std::string exam_id;

  int64_t numel() const { return s * h * w; }

  float& at(int64_t si, int64_t y, int64_t x) { return data[static_cast<size_t>((si * h + y) * w + x)]; }
  float at(int64_t si, int64_t y, int64_t x) const { return data[static_cast<size_t>((si * h + y) * w + x)]; }

  TensorT<float> to_tensor(bool requires_grad = false) const {
    return TensorT<float>::from_values(Shape{s, 1, h, w}, data, requires_grad);
  }
};

// Array-container file format used by the clinical dataset distributions:
// magic \x93NUMPY, version 1.0, length-prefixed header dict, raw little-endian
// C-order payload. Readers accept u8/i16/f32/f64 rank-3 payloads.
Volume read_volume(const std::string& path);
void write_volume(const std::string& path, const Volume& v);

// Generic rank-checked helpers shared by the reader/writer.
struct NpyArray {
  std::vector<int64_t> shape;
  std::vector<float> data;
};
NpyArray read_npy(const std::string& path);
void write_npy_f32(const std::string& path, const std::vector<int64_t>& shape,
                   const std::vector<float>& data);

}  // namespace elnet
