#include "cpima/codec.hpp"

#include <cmath>

namespace cpima {

void MlpSpec::validate() const {
  if (widths.size() < 2)
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("MlpSpec: widths must be positive");
}

Mlp Mlp::init(const MlpSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Mlp m;
  m.spec = spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    int in = spec.widths[static_cast<size_t>(l)];
    int out = spec.widths[static_cast<size_t>(l) + 1];
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / in));
    Tensor w({in, out});
    for (double& v : w.data) v = nd(rng);
    m.params.push_back(std::move(w));
    m.params.push_back(Tensor({out}));
  }
  return m;
}

Mlp Mlp::zeros(const MlpSpec& spec) {
  spec.validate();
  Mlp m;
  m.spec = spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    m.params.push_back(Tensor({spec.widths[static_cast<size_t>(l)],
                               spec.widths[static_cast<size_t>(l) + 1]}));
    m.params.push_back(Tensor({spec.widths[static_cast<size_t>(l) + 1]}));
  }
  return m;
}

std::vector<Var> track_params(Tape& tape, const std::vector<Tensor>& params) {
  std::vector<Var> vs;
  vs.reserve(params.size());
  for (const Tensor& p : params) vs.push_back(tape.track(p));
  return vs;
}

Var mlp_forward(Tape& tape, const MlpSpec& spec, const std::vector<Var>& params,
                Var x) {
  spec.validate();
  if (params.size() != static_cast<size_t>(2 * spec.num_layers()))
    throw std::invalid_argument("mlp_forward: parameter count mismatch");
  if (x.shape().size() != 2 || x.shape()[1] != spec.widths.front())
    throw std::invalid_argument("mlp_forward: input width mismatch");
  Var h = x;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Var w = params[static_cast<size_t>(2 * l)];
    Var b = params[static_cast<size_t>(2 * l) + 1];
    h = tape.matmul(h, w) + b;
    if (l + 1 < spec.num_layers())
      h = spec.act == Activation::Relu ? v_relu(h) : v_tanh(h);
  }
  return h;
}

GaussianVar encode(Tape& tape, const MlpSpec& spec,
                   const std::vector<Var>& params, Var x, int latent_dim) {
  if (spec.widths.back() != 2 * latent_dim)
    throw std::invalid_argument("encode: head width must be 2 * latent_dim");
  Var h = mlp_forward(tape, spec, params, x);
  GaussianVar q;
  q.mu = tape.slice(h, 1, 0, latent_dim);
  q.var = v_exp(tape.slice(h, 1, latent_dim, latent_dim));
  return q;
}

GaussianVar fuse_poe(Tape& tape, const std::vector<GaussianVar>& experts,
                     const std::vector<Tensor>* masks) {
  if (experts.empty())
    throw std::invalid_argument("fuse_poe: empty expert list");
  if (masks && masks->size() != experts.size())
    throw std::invalid_argument("fuse_poe: mask count mismatch");
  if (masks) {
    int B = experts.front().mu.shape()[0];
    for (int i = 0; i < B; ++i) {
      double present = 0.0;
      for (const Tensor& m : *masks) present += m.data[static_cast<size_t>(i)];
      if (present < 0.5)
        throw std::invalid_argument(
            "fuse_poe: sample with no present modality");
    }
  }
  Var prec = 1.0 / experts.front().var;
  Var wmu = experts.front().mu / experts.front().var;
  if (masks) {
    Var m0 = tape.constant((*masks)[0]);
    prec = prec * m0;
    wmu = wmu * m0;
  }
  for (size_t e = 1; e < experts.size(); ++e) {
    Var p = 1.0 / experts[e].var;
    Var w = experts[e].mu / experts[e].var;
    if (masks) {
      Var m = tape.constant((*masks)[e]);
      p = p * m;
      w = w * m;
    }
    prec = prec + p;
    wmu = wmu + w;
  }
  GaussianVar fused;
  fused.var = 1.0 / prec;
  fused.mu = wmu * fused.var;
  return fused;
}

Var sample_latent(Tape& tape, const GaussianVar& q, const Tensor& eps) {
  if (eps.shape != q.mu.shape())
    throw std::invalid_argument("sample_latent: eps shape mismatch");
  return q.mu + tape.constant(eps) * v_sqrt(q.var);
}

GaussianVar decode_neural(Tape& tape, const MlpSpec& spec,
                          const std::vector<Var>& params, Var z, int out_dim) {
  if (spec.widths.back() != 2 * out_dim)
    throw std::invalid_argument("decode_neural: head width must be 2 * out_dim");
  Var h = mlp_forward(tape, spec, params, z);
  GaussianVar p;
  p.mu = tape.slice(h, 1, 0, out_dim);
  p.var = v_exp(tape.slice(h, 1, out_dim, out_dim));
  return p;
}

ExpertCurveRaw ExpertCurveRaw::init(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 0.5);
  ExpertCurveRaw r;
  r.raw_breakpoint = Tensor::scalar(nd(rng));
  r.slope1 = Tensor::scalar(nd(rng));
  r.slope2 = Tensor::scalar(nd(rng));
  r.intercept = Tensor::scalar(0.5 + 0.1 * nd(rng));
  r.log_var = Tensor::scalar(-3.0);
  return r;
}

std::vector<Tensor> ExpertCurveRaw::as_params() const {
  return {raw_breakpoint, slope1, slope2, intercept, log_var};
}

ExpertCurveRaw ExpertCurveRaw::from_params(const std::vector<Tensor>& p) {
  if (p.size() != 5)
    throw std::invalid_argument("ExpertCurveRaw: expected 5 parameters");
  return ExpertCurveRaw{p[0], p[1], p[2], p[3], p[4]};
}

ExpertCurveParams expert_curve_value(const ExpertCurveRaw& raw) {
  ExpertCurveParams p;
  p.breakpoint = 1.0 / (1.0 + std::exp(-raw.raw_breakpoint[0]));
  p.slope1 = raw.slope1[0];
  p.slope2 = raw.slope2[0];
  p.intercept = raw.intercept[0];
  return p;
}

Var decode_expert_curve(Tape& tape, const std::vector<Var>& vars,
                        const Tensor& grid) {
  if (vars.size() < 4)
    throw std::invalid_argument("decode_expert_curve: expected 4 parameter vars");
  if (grid.ndim() != 1 || grid.size() < 2)
    throw std::invalid_argument("decode_expert_curve: grid must be a vector");
  for (int i = 0; i + 1 < grid.size(); ++i)
    if (grid[i] > grid[i + 1])
      throw std::invalid_argument("decode_expert_curve: grid must be sorted");
  Var bp = v_sigmoid(vars[0]);
  Var s1 = vars[1], s2 = vars[2], c = vars[3];
  Var s = tape.constant(grid);
  // past the breakpoint: (s - bp)_+ replaces the first slope by the second,
  // anchoring the second segment at the first one's endpoint
  Var over = v_relu(s - bp);
  return c + s1 * (s - over) + s2 * over;
}

}  // namespace cpima
