#pragma once

#include <optional>
#include <random>

#include "cpima/tape.hpp"

namespace cpima {

enum class Activation { Relu, Tanh };

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output
  Activation act = Activation::Relu;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  void validate() const;
};

// Parameters stored flat as W0, b0, W1, b1, ...; weights are [in, out].
struct Mlp {
  MlpSpec spec;
  std::vector<Tensor> params;

  static Mlp init(const MlpSpec& spec, std::mt19937_64& rng);
  static Mlp zeros(const MlpSpec& spec);
};

std::vector<Var> track_params(Tape& tape, const std::vector<Tensor>& params);

// x: [B, widths.front()] -> [B, widths.back()], activation between layers
// only (linear output head).
Var mlp_forward(Tape& tape, const MlpSpec& spec, const std::vector<Var>& params,
                Var x);

struct GaussianVar {
  Var mu;
  Var var;
};

// Split a 2J head into mean and exp(log-variance). x: [B, in] -> mu/var [B, J].
GaussianVar encode(Tape& tape, const MlpSpec& spec,
                   const std::vector<Var>& params, Var x, int latent_dim);

// Precision-weighted product of Gaussian experts. Optional per-expert
// presence masks [B, 1] with 0/1 entries; every sample needs at least one
// present expert.
GaussianVar fuse_poe(Tape& tape, const std::vector<GaussianVar>& experts,
                     const std::vector<Tensor>* masks = nullptr);

// z = mu + eps * sqrt(var); eps is a constant, so gradients reach mu and var
// only.
Var sample_latent(Tape& tape, const GaussianVar& q, const Tensor& eps);

// Decoder head mirrors the encoder: 2*D outputs split into mean and
// exp(log-variance).
GaussianVar decode_neural(Tape& tape, const MlpSpec& spec,
                          const std::vector<Var>& params, Var z, int out_dim);

// Two-segment continuous piecewise-linear curve on [0,1]. The breakpoint is
// the sigmoid of an unconstrained parameter so it stays interior; the second
// segment is anchored at the first segment's endpoint.
struct ExpertCurveRaw {
  Tensor raw_breakpoint;  // scalar
  Tensor slope1;          // scalar
  Tensor slope2;          // scalar
  Tensor intercept;       // scalar
  Tensor log_var;         // scalar reconstruction log-variance

  static ExpertCurveRaw init(std::mt19937_64& rng);
  std::vector<Tensor> as_params() const;
  static ExpertCurveRaw from_params(const std::vector<Tensor>& p);
};

struct ExpertCurveParams {
  double breakpoint;  // in (0,1)
  double slope1, slope2, intercept;
};

ExpertCurveParams expert_curve_value(const ExpertCurveRaw& raw);

// vars: tracked {raw_breakpoint, slope1, slope2, intercept} in that order.
// grid must be sorted ascending within [0,1]. Returns the curve [G].
Var decode_expert_curve(Tape& tape, const std::vector<Var>& vars,
                        const Tensor& grid);

}  // namespace cpima
