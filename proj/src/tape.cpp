#include "cpima/tape.hpp"

#include <cmath>

namespace cpima {

const Tensor& Var::val() const { return tape->val(id); }
const Shape& Var::shape() const { return tape->val(id).shape; }

Var Tape::track(Tensor t) {
  values_.push_back(std::move(t));
  nodes_.push_back({});
  grads_.emplace_back();
  grad_set_.push_back(0);
  return Var{this, static_cast<int>(values_.size()) - 1};
}

Var Tape::emit(Tensor value, std::function<void(Tape&)> back) {
  values_.push_back(std::move(value));
  nodes_.push_back({std::move(back)});
  grads_.emplace_back();
  grad_set_.push_back(0);
  return Var{this, static_cast<int>(values_.size()) - 1};
}

Tensor& Tape::grad_slot(int id) {
  size_t u = static_cast<size_t>(id);
  if (!grad_set_[u]) {
    grads_[u] = Tensor::zeros(values_[u].shape);
    grad_set_[u] = 1;
  }
  return grads_[u];
}

const Tensor& Tape::grad(int id) { return grad_slot(id); }

void Tape::add_grad(int id, const Tensor& g) {
  Tensor& slot = grad_slot(id);
  Tensor contrib = g.shape == slot.shape ? g : reduce_to_shape(g, slot.shape);
  for (size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += contrib.data[i];
}

void Tape::backward(const Var& loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: foreign var");
  if (!values_[static_cast<size_t>(loss.id)].is_scalar())
    throw std::invalid_argument("backward: loss must be scalar");
  if (!std::isfinite(values_[static_cast<size_t>(loss.id)].data[0]))
    throw std::domain_error("backward: loss is not finite");
  grads_.assign(values_.size(), Tensor());
  grad_set_.assign(values_.size(), 0);
  grad_slot(loss.id).data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    size_t u = static_cast<size_t>(i);
    if (!grad_set_[u] || !nodes_[u].back) continue;
    nodes_[u].back(*this);
  }
}

namespace {

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape)
    throw std::invalid_argument("operands recorded on different tapes");
}

void check_domain(const Tensor& t, const char* op, bool strictly_positive) {
  for (double v : t.data) {
    if (strictly_positive ? v <= 0.0 : v < 0.0)
      throw std::domain_error(std::string(op) + ": input out of domain (" +
                              std::to_string(v) + ")");
  }
}

}  // namespace

Var Tape::add(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = t_add(val(a.id), val(b.id));
  int ai = a.id, bi = b.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, bi, oi](Tape& t) {
    const Tensor g = t.grad_slot(oi);
    t.add_grad(ai, g);
    t.add_grad(bi, g);
  };
  return r;
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = t_sub(val(a.id), val(b.id));
  int ai = a.id, bi = b.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, bi, oi](Tape& t) {
    const Tensor g = t.grad_slot(oi);
    t.add_grad(ai, g);
    t.add_grad(bi, ew_unary(g, [](double v) { return -v; }));
  };
  return r;
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = t_mul(val(a.id), val(b.id));
  int ai = a.id, bi = b.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, bi, oi](Tape& t) {
    const Tensor g = t.grad_slot(oi);
    t.add_grad(ai, t_mul(g, t.val(bi)));
    t.add_grad(bi, t_mul(g, t.val(ai)));
  };
  return r;
}

Var Tape::div(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = t_div(val(a.id), val(b.id));
  int ai = a.id, bi = b.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, bi, oi](Tape& t) {
    const Tensor g = t.grad_slot(oi);
    t.add_grad(ai, t_div(g, t.val(bi)));
    // d/db (a/b) = -a/b^2 = -out/b
    Tensor gb = t_mul(g, t_div(t.val(oi), t.val(bi)));
    t.add_grad(bi, ew_unary(gb, [](double v) { return -v; }));
  };
  return r;
}

Var Tape::neg(Var a) {
  Tensor out = ew_unary(val(a.id), [](double v) { return -v; });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    t.add_grad(ai, ew_unary(t.grad_slot(oi), [](double v) { return -v; }));
  };
  return r;
}

Var Tape::exp(Var a) {
  Tensor out = ew_unary(val(a.id), [](double v) { return std::exp(v); });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    t.add_grad(ai, t_mul(t.grad_slot(oi), t.val(oi)));
  };
  return r;
}

Var Tape::log(Var a) {
  check_domain(val(a.id), "log", /*strictly_positive=*/true);
  Tensor out = ew_unary(val(a.id), [](double v) { return std::log(v); });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    t.add_grad(ai, t_div(t.grad_slot(oi), t.val(ai)));
  };
  return r;
}

Var Tape::tanh(Var a) {
  Tensor out = ew_unary(val(a.id), [](double v) { return std::tanh(v); });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    Tensor d = ew_unary(t.val(oi), [](double y) { return 1.0 - y * y; });
    t.add_grad(ai, t_mul(t.grad_slot(oi), d));
  };
  return r;
}

Var Tape::relu(Var a) {
  Tensor out = ew_unary(val(a.id), [](double v) { return v > 0 ? v : 0.0; });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    Tensor mask = ew_unary(t.val(ai), [](double v) { return v > 0 ? 1.0 : 0.0; });
    t.add_grad(ai, t_mul(t.grad_slot(oi), mask));
  };
  return r;
}

Var Tape::square(Var a) {
  Tensor out = ew_unary(val(a.id), [](double v) { return v * v; });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    Tensor d = ew_unary(t.val(ai), [](double v) { return 2.0 * v; });
    t.add_grad(ai, t_mul(t.grad_slot(oi), d));
  };
  return r;
}

Var Tape::sqrt(Var a) {
  check_domain(val(a.id), "sqrt", /*strictly_positive=*/true);
  Tensor out = ew_unary(val(a.id), [](double v) { return std::sqrt(v); });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    Tensor d = ew_unary(t.val(oi), [](double y) { return 0.5 / y; });
    t.add_grad(ai, t_mul(t.grad_slot(oi), d));
  };
  return r;
}

Var Tape::softplus(Var a) {
  // log(1 + e^x), overflow-safe
  Tensor out = ew_unary(val(a.id), [](double v) {
    return v > 30.0 ? v : std::log1p(std::exp(v));
  });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    Tensor d = ew_unary(t.val(ai), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    t.add_grad(ai, t_mul(t.grad_slot(oi), d));
  };
  return r;
}

Var Tape::sigmoid(Var a) {
  Tensor out = ew_unary(val(a.id), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi](Tape& t) {
    Tensor d = ew_unary(t.val(oi), [](double y) { return y * (1.0 - y); });
    t.add_grad(ai, t_mul(t.grad_slot(oi), d));
  };
  return r;
}

Var Tape::sum(Var a, const std::vector<int>& axes, bool keepdims) {
  Tensor out = t_sum(val(a.id), axes, keepdims);
  int ai = a.id;
  Shape in_shape = val(a.id).shape;
  auto ax = normalize_axes(in_shape, axes);
  if (ax.empty()) {
    ax.resize(in_shape.size());
    for (size_t i = 0; i < ax.size(); ++i) ax[i] = static_cast<int>(i);
  }
  Shape kshape = reduced_shape(in_shape, ax, /*keepdims=*/true);
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi, in_shape, kshape](Tape& t) {
    // Broadcast the (keepdims view of the) output grad back to input shape.
    Tensor g = t.grad_slot(oi).reshaped(kshape);
    Tensor expanded = t_add(g, Tensor::zeros(in_shape));
    t.add_grad(ai, expanded);
  };
  return r;
}

Var Tape::mean(Var a, const std::vector<int>& axes, bool keepdims) {
  Var s = sum(a, axes, keepdims);
  double count = static_cast<double>(shape_size(val(a.id).shape)) /
                 static_cast<double>(shape_size(val(s.id).shape));
  return mul(s, constant(Tensor::scalar(1.0 / count)));
}

Var Tape::max(Var a, const std::vector<int>& axes, bool keepdims) {
  Tensor out = t_max(val(a.id), axes, keepdims);
  Shape in_shape = val(a.id).shape;
  auto ax = normalize_axes(in_shape, axes);
  if (ax.empty()) {
    ax.resize(in_shape.size());
    for (size_t i = 0; i < ax.size(); ++i) ax[i] = static_cast<int>(i);
  }
  Tensor kept = t_max(val(a.id), axes, /*keepdims=*/true);
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi, in_shape, ax, kept](Tape& t) {
    Tensor g = t.grad_slot(oi).reshaped(kept.shape);
    // route gradient to positions attaining the max (split on ties)
    Tensor ismax = ew_binary(t.val(ai), kept, [](double v, double m) {
      return v == m ? 1.0 : 0.0;
    });
    Tensor counts = t_sum(ismax, ax, /*keepdims=*/true);
    Tensor gin = t_mul(ismax, t_div(g, counts));
    t.add_grad(ai, gin);
  };
  return r;
}

Var Tape::logsumexp(Var a, const std::vector<int>& axes, bool keepdims) {
  Tensor out = t_logsumexp(val(a.id), axes, keepdims);
  Shape in_shape = val(a.id).shape;
  auto ax = normalize_axes(in_shape, axes);
  if (ax.empty()) {
    ax.resize(in_shape.size());
    for (size_t i = 0; i < ax.size(); ++i) ax[i] = static_cast<int>(i);
  }
  Tensor kept = t_logsumexp(val(a.id), axes, /*keepdims=*/true);
  int ai = a.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi, kept](Tape& t) {
    Tensor g = t.grad_slot(oi).reshaped(kept.shape);
    // d lse / d x = softmax(x) = exp(x - lse)
    Tensor sm = ew_binary(t.val(ai), kept,
                          [](double v, double l) { return std::exp(v - l); });
    t.add_grad(ai, t_mul(g, sm));
  };
  return r;
}

Var Tape::reshape(Var a, const Shape& s) {
  Tensor out = val(a.id).reshaped(s);
  int ai = a.id;
  Shape in_shape = val(a.id).shape;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi, in_shape](Tape& t) {
    t.add_grad(ai, t.grad_slot(oi).reshaped(in_shape));
  };
  return r;
}

Var Tape::slice(Var a, int axis, int start, int len) {
  const Tensor& in = val(a.id);
  if (axis < 0 || axis >= in.ndim())
    throw std::invalid_argument("slice: axis out of range");
  int dim = in.shape[static_cast<size_t>(axis)];
  if (start < 0 || len <= 0 || start + len > dim)
    throw std::invalid_argument("slice: bounds out of range");
  Shape out_shape = in.shape;
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor out(out_shape);
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= in.shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < in.ndim(); ++i) inner *= in.shape[static_cast<size_t>(i)];
  for (int o = 0; o < outer; ++o)
    for (int j = 0; j < len; ++j)
      std::copy_n(in.data.data() + (static_cast<size_t>(o) * dim + start + j) * inner,
                  inner,
                  out.data.data() + (static_cast<size_t>(o) * len + j) * inner);
  int ai = a.id;
  Shape in_shape = in.shape;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, oi, in_shape, axis, start, len,
                                          outer, inner, dim](Tape& t) {
    const Tensor& g = t.grad_slot(oi);
    Tensor gin = Tensor::zeros(in_shape);
    for (int o = 0; o < outer; ++o)
      for (int j = 0; j < len; ++j) {
        const double* src = g.data.data() + (static_cast<size_t>(o) * len + j) * inner;
        double* dst = gin.data.data() +
                      (static_cast<size_t>(o) * dim + start + j) * inner;
        for (int i = 0; i < inner; ++i) dst[i] += src[i];
      }
    t.add_grad(ai, gin);
  };
  return r;
}

Var Tape::mode_contract(Var w, Var v, int mode) {
  check_same_tape(w, v);
  Tensor out = t_mode_contract(val(w.id), val(v.id), mode);
  int wi = w.id, vi = v.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [wi, vi, oi, mode](Tape& t) {
    const Tensor& g = t.grad_slot(oi);
    const Tensor& w_val = t.val(wi);
    const Tensor& v_val = t.val(vi);
    int outer = 1, inner = 1;
    int c = w_val.shape[static_cast<size_t>(mode)];
    for (int i = 0; i < mode; ++i) outer *= w_val.shape[static_cast<size_t>(i)];
    for (int i = mode + 1; i < w_val.ndim(); ++i)
      inner *= w_val.shape[static_cast<size_t>(i)];
    Tensor gw = Tensor::zeros(w_val.shape);
    Tensor gv = Tensor::zeros(v_val.shape);
    for (int o = 0; o < outer; ++o)
      for (int k = 0; k < c; ++k) {
        double vk = v_val.data[static_cast<size_t>(k)];
        const double* grow = g.data.data() + static_cast<size_t>(o) * inner;
        const double* wrow =
            w_val.data.data() + (static_cast<size_t>(o) * c + k) * inner;
        double* gwrow = gw.data.data() + (static_cast<size_t>(o) * c + k) * inner;
        double acc = 0;
        for (int i = 0; i < inner; ++i) {
          gwrow[i] += grow[i] * vk;
          acc += grow[i] * wrow[i];
        }
        gv.data[static_cast<size_t>(k)] += acc;
      }
    t.add_grad(wi, gw);
    t.add_grad(vi, gv);
  };
  return r;
}

Var Tape::matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = t_matmul(val(a.id), val(b.id));
  int ai = a.id, bi = b.id;
  Var r = emit(std::move(out), nullptr);
  int oi = r.id;
  nodes_[static_cast<size_t>(oi)].back = [ai, bi, oi](Tape& t) {
    const Tensor& g = t.grad_slot(oi);   // m x n
    const Tensor& av = t.val(ai);        // m x k
    const Tensor& bv = t.val(bi);        // k x n
    int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor ga({m, k}), gb({k, n});
    // ga = g * b^T
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double acc = 0;
        const double* grow = g.data.data() + static_cast<size_t>(i) * n;
        const double* brow = bv.data.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga.data[static_cast<size_t>(i * k + p)] = acc;
      }
    // gb = a^T * g
    for (int i = 0; i < m; ++i) {
      const double* arow = av.data.data() + static_cast<size_t>(i) * k;
      const double* grow = g.data.data() + static_cast<size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        double apv = arow[p];
        if (apv == 0.0) continue;
        double* gbrow = gb.data.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) gbrow[j] += apv * grow[j];
      }
    }
    t.add_grad(ai, ga);
    t.add_grad(bi, gb);
  };
  return r;
}

Var Tape::softmax(Var a, int axis) {
  Var lse = logsumexp(a, {axis}, /*keepdims=*/true);
  return exp(sub(a, lse));
}

// --- operator sugar ---

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
Var operator/(Var a, Var b) { return a.tape->div(a, b); }
Var operator-(Var a) { return a.tape->neg(a); }
Var operator+(Var a, double b) { return a + a.tape->constant(b); }
Var operator-(Var a, double b) { return a - a.tape->constant(b); }
Var operator*(Var a, double b) { return a * a.tape->constant(b); }
Var operator/(Var a, double b) { return a / a.tape->constant(b); }
Var operator+(double a, Var b) { return b.tape->constant(a) + b; }
Var operator-(double a, Var b) { return b.tape->constant(a) - b; }
Var operator*(double a, Var b) { return b.tape->constant(a) * b; }
Var operator/(double a, Var b) { return b.tape->constant(a) / b; }

Var v_exp(Var a) { return a.tape->exp(a); }
Var v_log(Var a) { return a.tape->log(a); }
Var v_tanh(Var a) { return a.tape->tanh(a); }
Var v_relu(Var a) { return a.tape->relu(a); }
Var v_square(Var a) { return a.tape->square(a); }
Var v_sqrt(Var a) { return a.tape->sqrt(a); }
Var v_softplus(Var a) { return a.tape->softplus(a); }
Var v_sigmoid(Var a) { return a.tape->sigmoid(a); }

}  // namespace cpima
