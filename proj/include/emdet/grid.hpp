#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace emdet {

/// Dense row-major 2D grid. Row 0 is the minimum-y edge of the map,
/// column 0 the minimum-x edge.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T value = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, value) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("Grid: dimensions must be positive");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  /// Value at (r, c), or `outside` when the index is off the grid.
  T at_or(int r, int c, T outside) const { return in_bounds(r, c) ? (*this)(r, c) : outside; }

  const T* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  T* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  void fill(T value) { data_.assign(data_.size(), value); }

  bool same_shape(const Grid& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  const std::vector<T>& values() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace emdet
