#pragma once

// Dense multi-dimensional array of doubles. Plain value storage; gradient
// bookkeeping lives in autodiff.hpp.

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace asfm::ad {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != static_cast<std::size_t>(numel_of(shape)))
      throw std::invalid_argument("Tensor: value count does not match shape");
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::int64_t> s) {
    const auto n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }

  static Tensor scalar(double x) { return Tensor({}, {x}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& at(std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace asfm::ad
