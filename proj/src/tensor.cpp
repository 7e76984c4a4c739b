#include "cpima/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cpima {

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_size(shape) != static_cast<int>(data.size()))
    throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                " inconsistent with data length " +
                                std::to_string(data.size()));
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_size(shape)), 0.0);
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }
Tensor Tensor::zeros(const Shape& s) { return Tensor(s); }
Tensor Tensor::full(const Shape& s, double v) {
  Tensor t(s);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}
Tensor Tensor::vector(std::vector<double> d) {
  int n = static_cast<int>(d.size());
  return Tensor({n}, std::move(d));
}

std::vector<int> row_major_strides(const Shape& s) {
  std::vector<int> st(s.size());
  int acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

int flat_index(const Shape& shape, const std::vector<int>& idx) {
  if (idx.size() != shape.size())
    throw std::invalid_argument("index rank mismatch");
  int flat = 0, acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    size_t u = static_cast<size_t>(i);
    if (idx[u] < 0 || idx[u] >= shape[u])
      throw std::invalid_argument("index out of range");
    flat += idx[u] * acc;
    acc *= shape[u];
  }
  return flat;
}

std::vector<int> unflatten_index(const Shape& shape, int flat) {
  std::vector<int> idx(shape.size());
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    size_t u = static_cast<size_t>(i);
    idx[u] = flat % shape[u];
    flat /= shape[u];
  }
  return idx;
}

double& Tensor::at(const std::vector<int>& idx) {
  return data[static_cast<size_t>(flat_index(shape, idx))];
}
double Tensor::at(const std::vector<int>& idx) const {
  return data[static_cast<size_t>(flat_index(shape, idx))];
}

Tensor Tensor::reshaped(const Shape& s) const {
  if (shape_size(s) != size())
    throw std::invalid_argument("reshape " + shape_str(shape) + " -> " +
                                shape_str(s) + " changes element count");
  return Tensor(s, data);
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (size_t i = 0; i < n; ++i) {
    int da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    int db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("shapes " + shape_str(a) + " and " +
                                  shape_str(b) + " are not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

// Strides of `s` viewed as shape `out` (0 stride on broadcast axes).
std::vector<int> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<int> st(out.size(), 0);
  auto own = row_major_strides(s);
  size_t off = out.size() - s.size();
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i] != 1) st[off + i] = own[i];
  return st;
}

}  // namespace

Tensor ew_binary(const Tensor& a, const Tensor& b,
                 const std::function<double(double, double)>& f) {
  Shape out_shape = broadcast_shape(a.shape, b.shape);
  Tensor out(out_shape);
  auto sa = broadcast_strides(a.shape, out_shape);
  auto sb = broadcast_strides(b.shape, out_shape);
  int n = out.size();
  std::vector<int> idx(out_shape.size(), 0);
  int ia = 0, ib = 0;
  for (int i = 0; i < n; ++i) {
    out.data[static_cast<size_t>(i)] =
        f(a.data[static_cast<size_t>(ia)], b.data[static_cast<size_t>(ib)]);
    // advance multi-index
    for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
      size_t u = static_cast<size_t>(d);
      idx[u]++;
      ia += sa[u];
      ib += sb[u];
      if (idx[u] < out_shape[u]) break;
      ia -= sa[u] * out_shape[u];
      ib -= sb[u] * out_shape[u];
      idx[u] = 0;
    }
  }
  return out;
}

Tensor ew_unary(const Tensor& a, const std::function<double(double)>& f) {
  Tensor out(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

Tensor t_add(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, [](double x, double y) { return x + y; });
}
Tensor t_sub(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, [](double x, double y) { return x - y; });
}
Tensor t_mul(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, [](double x, double y) { return x * y; });
}
Tensor t_div(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, [](double x, double y) {
    if (y == 0.0) throw std::domain_error("div: zero denominator");
    return x / y;
  });
}

Tensor reduce_to_shape(const Tensor& t, const Shape& target) {
  if (t.shape == target) return t;
  // Align target against t's trailing dims; sum out leading/broadcast dims.
  std::vector<int> axes;
  size_t off = t.shape.size() - target.size();
  for (size_t i = 0; i < off; ++i) axes.push_back(static_cast<int>(i));
  for (size_t i = 0; i < target.size(); ++i)
    if (target[i] == 1 && t.shape[off + i] != 1)
      axes.push_back(static_cast<int>(off + i));
  Tensor r = t_sum(t, axes, /*keepdims=*/false);
  // Re-insert kept singleton dims.
  return r.reshaped(target);
}

std::vector<int> normalize_axes(const Shape& shape,
                                const std::vector<int>& axes) {
  std::vector<int> out;
  for (int a : axes) {
    int v = a < 0 ? a + static_cast<int>(shape.size()) : a;
    if (v < 0 || v >= static_cast<int>(shape.size()))
      throw std::invalid_argument("reduction axis " + std::to_string(a) +
                                  " invalid for shape " + shape_str(shape));
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Shape reduced_shape(const Shape& shape, const std::vector<int>& axes,
                    bool keepdims) {
  Shape out;
  for (size_t i = 0; i < shape.size(); ++i) {
    bool hit = std::find(axes.begin(), axes.end(), static_cast<int>(i)) != axes.end();
    if (hit) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(shape[i]);
    }
  }
  return out;
}

namespace {

// Applies `accum` over reduced axes; `init` per output cell.
template <typename Init, typename Accum>
Tensor reduce_impl(const Tensor& a, const std::vector<int>& raw_axes,
                   bool keepdims, Init init, Accum accum) {
  auto axes = normalize_axes(a.shape, raw_axes);
  if (axes.empty()) {
    // reduce over all axes
    axes.resize(a.shape.size());
    std::iota(axes.begin(), axes.end(), 0);
  }
  Shape kshape = reduced_shape(a.shape, axes, /*keepdims=*/true);
  Tensor out(kshape);
  for (auto& v : out.data) v = init;
  auto ostrides = row_major_strides(kshape);
  int n = a.size();
  for (int i = 0; i < n; ++i) {
    auto idx = unflatten_index(a.shape, i);
    int oflat = 0;
    for (size_t d = 0; d < kshape.size(); ++d)
      if (kshape[d] != 1) oflat += idx[d] * ostrides[d];
    accum(out.data[static_cast<size_t>(oflat)], a.data[static_cast<size_t>(i)]);
  }
  if (!keepdims) out = out.reshaped(reduced_shape(a.shape, axes, false));
  return out;
}

}  // namespace

Tensor t_sum(const Tensor& a, const std::vector<int>& axes, bool keepdims) {
  return reduce_impl(a, axes, keepdims, 0.0,
                     [](double& acc, double v) { acc += v; });
}

Tensor t_mean(const Tensor& a, const std::vector<int>& axes, bool keepdims) {
  auto ax = normalize_axes(a.shape, axes);
  if (ax.empty()) {
    ax.resize(a.shape.size());
    std::iota(ax.begin(), ax.end(), 0);
  }
  int count = 1;
  for (int d : ax) count *= a.shape[static_cast<size_t>(d)];
  Tensor s = t_sum(a, axes, keepdims);
  for (auto& v : s.data) v /= count;
  return s;
}

Tensor t_max(const Tensor& a, const std::vector<int>& axes, bool keepdims) {
  return reduce_impl(a, axes, keepdims,
                     -std::numeric_limits<double>::infinity(),
                     [](double& acc, double v) { acc = std::max(acc, v); });
}

Tensor t_logsumexp(const Tensor& a, const std::vector<int>& axes,
                   bool keepdims) {
  Tensor m = t_max(a, axes, /*keepdims=*/true);
  Tensor shifted = ew_binary(a, m, [](double x, double mx) { return std::exp(x - mx); });
  Tensor s = t_sum(shifted, axes, /*keepdims=*/true);
  Tensor out = ew_binary(s, m, [](double sv, double mv) { return std::log(sv) + mv; });
  if (!keepdims) {
    auto ax = normalize_axes(a.shape, axes);
    if (ax.empty()) {
      ax.resize(a.shape.size());
      std::iota(ax.begin(), ax.end(), 0);
    }
    out = out.reshaped(reduced_shape(a.shape, ax, false));
  }
  return out;
}

double t_sum_all(const Tensor& a) {
  double s = 0;
  for (double v : a.data) s += v;
  return s;
}

Tensor t_mode_contract(const Tensor& w, const Tensor& v, int mode) {
  if (v.ndim() != 1)
    throw std::invalid_argument("mode_contract: v must be a vector");
  if (mode < 0 || mode >= w.ndim())
    throw std::invalid_argument("mode_contract: mode out of range");
  if (v.shape[0] != w.shape[static_cast<size_t>(mode)])
    throw std::invalid_argument(
        "mode_contract: vector length " + std::to_string(v.shape[0]) +
        " != dim " + std::to_string(w.shape[static_cast<size_t>(mode)]) +
        " of mode " + std::to_string(mode));
  Shape out_shape = w.shape;
  out_shape.erase(out_shape.begin() + mode);
  Tensor out(out_shape.empty() ? Shape{} : out_shape);
  int outer = 1, inner = 1;
  for (int i = 0; i < mode; ++i) outer *= w.shape[static_cast<size_t>(i)];
  for (int i = mode + 1; i < w.ndim(); ++i) inner *= w.shape[static_cast<size_t>(i)];
  int c = w.shape[static_cast<size_t>(mode)];
  for (int o = 0; o < outer; ++o)
    for (int k = 0; k < c; ++k) {
      double vk = v.data[static_cast<size_t>(k)];
      const double* src = w.data.data() + (static_cast<size_t>(o) * c + k) * inner;
      double* dst = out.data.data() + static_cast<size_t>(o) * inner;
      for (int i = 0; i < inner; ++i) dst[i] += src[i] * vk;
    }
  return out;
}

Tensor t_matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw std::invalid_argument("matmul expects rank-2 tensors");
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: inner dims " + shape_str(a.shape) +
                                " x " + shape_str(b.shape) + " mismatch");
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double av = a.data[static_cast<size_t>(i * k + p)];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + static_cast<size_t>(p) * n;
      double* orow = out.data.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return out;
}

bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace cpima
