#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace elnet {

// Dense tensor shape. Activations use the 4-axis (slices, channels, height,
// width) layout; parameters use their natural ranks.
struct Shape {
  std::vector<int64_t> dims;

  Shape() = default;
  Shape(std::initializer_list<int64_t> d) : dims(d) { validate(); }
  explicit Shape(std::vector<int64_t> d) : dims(std::move(d)) { validate(); }

  void validate() const {
    if (dims.empty()) throw std::invalid_argument("Shape: rank must be >= 1");
    for (int64_t d : dims) {
      if (d < 1) throw std::invalid_argument("Shape: every dim must be >= 1");
    }
  }

  int64_t rank() const { return static_cast<int64_t>(dims.size()); }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }

  int64_t operator[](int64_t i) const { return dims[static_cast<size_t>(i)]; }

  bool operator==(const Shape& o) const { return dims == o.dims; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < dims.size(); ++i) {
      if (i) os << ", ";
      os << dims[i];
    }
    os << ")";
    return os.str();
  }
};

}  // namespace elnet
