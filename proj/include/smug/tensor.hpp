#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace smug::ad {

// Dense row-major tensor of doubles. Rank 0 (empty shape) is a scalar with
// one element.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
  }

  static Tensor from(std::vector<int> s, std::vector<double> d) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    if (static_cast<int64_t>(t.data.size()) != numel_of(t.shape))
      throw std::invalid_argument("Tensor::from: data length does not match shape");
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool empty() const { return data.empty(); }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // [C,H,W] indexing
  double& at3(int c, int h, int w) {
    return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
  }
  double at3(int c, int h, int w) const {
    return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor& add_(const Tensor& o) {
    for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  Tensor& sub_(const Tensor& o) {
    for (size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
  }
  Tensor& scale_(double c) {
    for (double& v : data) v *= c;
    return *this;
  }
  // this += a * x
  Tensor& axpy_(double a, const Tensor& x) {
    for (size_t i = 0; i < data.size(); ++i) data[i] += a * x.data[i];
    return *this;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": operand shapes differ: " +
                                shape_str(a.shape) + " vs " + shape_str(b.shape));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor r = a;
  r.add_(b);
  return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor r = a;
  r.sub_(b);
  return r;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor r = a;
  r.scale_(c);
  return r;
}

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double norm2sq(const Tensor& a) { return dot(a, a); }
inline double norm2(const Tensor& a) { return std::sqrt(norm2sq(a)); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace smug::ad
