#pragma once

#include <cstddef>
#include <vector>

namespace drnas {

// Row-major dense matrix of doubles. Everything at desk scale is small
// enough that value semantics (copies in caches, etc.) are the right trade.
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor2& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

}  // namespace drnas
