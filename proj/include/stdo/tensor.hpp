#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stdo/error.hpp"

namespace stdo {

struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t count() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
  }
};

// Dense NCHW float tensor.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, float fill = 0.0f)
      : shape_(shape), data_(shape.count(), fill) {}
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : Tensor4(Shape4{n, c, h, w}, fill) {}
  Tensor4(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  // Pointer to the (n, c) plane.
  float* plane(std::size_t n, std::size_t c) { return data_.data() + index(n, c, 0, 0); }
  const float* plane(std::size_t n, std::size_t c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_;
  std::vector<float> data_;
};

inline bool all_finite(const Tensor4& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v); });
}

inline void require_finite(const Tensor4& t, const char* what) {
  if (!all_finite(t)) throw NumericError(std::string(what) + ": non-finite value");
}

inline void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

// Copies sample `src_n` of `src` into sample `dst_n` of `dst`. Shapes must agree on (c, h, w).
inline void copy_sample(const Tensor4& src, std::size_t src_n, Tensor4& dst, std::size_t dst_n) {
  const std::size_t len = src.c() * src.h() * src.w();
  std::copy_n(src.data() + src_n * len, len, dst.data() + dst_n * len);
}

}  // namespace stdo
