#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpima {

using Shape = std::vector<int>;

// Dense row-major tensor of 64-bit reals.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);
  explicit Tensor(Shape s);  // zero-filled

  static Tensor scalar(double v);
  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor vector(std::vector<double> d);

  int size() const { return static_cast<int>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return data.size() == 1; }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }

  double& at(const std::vector<int>& idx);
  double at(const std::vector<int>& idx) const;

  Tensor reshaped(const Shape& s) const;
};

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<int> row_major_strides(const Shape& s);

// Flat offset <-> multi-index helpers.
int flat_index(const Shape& shape, const std::vector<int>& idx);
std::vector<int> unflatten_index(const Shape& shape, int flat);

// Numpy-style broadcast of two shapes; throws std::invalid_argument on
// incompatible shapes.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Sum `t` down to `target` (inverse of broadcasting); shapes must be
// broadcast-compatible with `target` as the smaller one.
Tensor reduce_to_shape(const Tensor& t, const Shape& target);

// Plain (tape-free) tensor math, shared by oracles, the GMM block update
// and reporting code.
Tensor ew_binary(const Tensor& a, const Tensor& b,
                 const std::function<double(double, double)>& f);
Tensor ew_unary(const Tensor& a, const std::function<double(double)>& f);
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_div(const Tensor& a, const Tensor& b);
Tensor t_sum(const Tensor& a, const std::vector<int>& axes, bool keepdims);
Tensor t_mean(const Tensor& a, const std::vector<int>& axes, bool keepdims);
Tensor t_max(const Tensor& a, const std::vector<int>& axes, bool keepdims);
Tensor t_logsumexp(const Tensor& a, const std::vector<int>& axes,
                   bool keepdims);
double t_sum_all(const Tensor& a);

// result[i1,..] = sum_c w[..,c,..] * v[c], dropping dimension `mode`.
Tensor t_mode_contract(const Tensor& w, const Tensor& v, int mode);

Tensor t_matmul(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& t);

// Validates axes and returns them sorted/unique.
std::vector<int> normalize_axes(const Shape& shape,
                                const std::vector<int>& axes);
Shape reduced_shape(const Shape& shape, const std::vector<int>& axes,
                    bool keepdims);

}  // namespace cpima
