#ifndef FOFSEG_GRID_HPP
#define FOFSEG_GRID_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fofseg/error.hpp"

namespace fofseg {

/// Dense row-major 2-D array. Index (x, y) maps to y * width + x.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, const T& fill = T{})
      : width_(width), height_(height),
        values_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  T& operator()(int x, int y) { return values_[index(x, y)]; }
  const T& operator()(int x, int y) const { return values_[index(x, y)]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Grid& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* context) {
  if (!a.same_shape(b)) {
    throw Error(Errc::dimension_mismatch,
                std::string(context) + ": " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

}  // namespace fofseg

#endif  // FOFSEG_GRID_HPP
