#pragma once

#include <functional>
#include <memory>

#include "cpima/tensor.hpp"

namespace cpima {

class Tape;

// Handle to a tensor recorded on a tape. Cheap to copy; valid as long as the
// tape lives. Arithmetic on Vars records the expression graph define-by-run.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& val() const;
  const Shape& shape() const;
};

// Single-threaded reverse-mode gradient tape. Rebuilt per training step.
class Tape {
 public:
  // Leaf tensor; gradients accumulate into it on backward().
  Var track(Tensor t);
  // Constant: participates in the graph, grads computed but usually ignored.
  Var constant(Tensor t) { return track(std::move(t)); }
  Var constant(double v) { return track(Tensor::scalar(v)); }

  const Tensor& val(int id) const { return values_[static_cast<size_t>(id)]; }
  // Gradient of the last backward() target wrt var `id` (zero if untouched).
  const Tensor& grad(int id);
  const Tensor& grad(const Var& v) { return grad(v.id); }

  // Runs reverse accumulation from a scalar loss.
  void backward(const Var& loss);

  size_t num_nodes() const { return values_.size(); }

  // --- primitive ops ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var softplus(Var a);
  Var sigmoid(Var a);

  Var sum(Var a, const std::vector<int>& axes = {}, bool keepdims = false);
  Var mean(Var a, const std::vector<int>& axes = {}, bool keepdims = false);
  Var max(Var a, const std::vector<int>& axes = {}, bool keepdims = false);
  Var logsumexp(Var a, const std::vector<int>& axes = {},
                bool keepdims = false);

  Var reshape(Var a, const Shape& s);
  Var slice(Var a, int axis, int start, int len);
  Var mode_contract(Var w, Var v, int mode);
  Var matmul(Var a, Var b);
  // softmax along one axis (logsumexp-stable composite)
  Var softmax(Var a, int axis);

 private:
  struct Node {
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Var emit(Tensor value, std::function<void(Tape&)> back);
  Tensor& grad_slot(int id);
  void add_grad(int id, const Tensor& g);

  std::vector<Tensor> values_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> grad_set_;
};

// Operator sugar (all operands must share a tape).
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator-(Var a, double b);
Var operator*(Var a, double b);
Var operator/(Var a, double b);
Var operator+(double a, Var b);
Var operator-(double a, Var b);
Var operator*(double a, Var b);
Var operator/(double a, Var b);

Var v_exp(Var a);
Var v_log(Var a);
Var v_tanh(Var a);
Var v_relu(Var a);
Var v_square(Var a);
Var v_sqrt(Var a);
Var v_softplus(Var a);
Var v_sigmoid(Var a);

}  // namespace cpima
