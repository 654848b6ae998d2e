#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace deepddm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Dense row-major list of points of a fixed dimension.
class Points {
 public:
  explicit Points(std::size_t dim = 2) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("Points: dimension must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return data_.size() / dim_; }
  bool empty() const { return data_.empty(); }
  void reserve(std::size_t n) { data_.reserve(n * dim_); }
  void clear() { data_.clear(); }

  void push_back(std::span<const double> p) {
    if (p.size() != dim_) throw std::invalid_argument("Points: dimension mismatch");
    data_.insert(data_.end(), p.begin(), p.end());
  }
  void push_back(Vec2 p) {
    if (dim_ != 2) throw std::invalid_argument("Points: Vec2 pushed into non-2D set");
    data_.push_back(p.x);
    data_.push_back(p.y);
  }

  std::span<const double> operator[](std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  Vec2 at2(std::size_t i) const { return {data_[i * dim_], data_[i * dim_ + 1]}; }

  std::span<const double> data() const { return data_; }

 private:
  std::size_t dim_;
  std::vector<double> data_;
};

}  // namespace deepddm
