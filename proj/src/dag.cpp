#include "cpima/dag.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cpima {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// inverse of softplus for targets > 0
double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

Tensor offdiag_mask(int L) {
  Tensor m({L, L});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (i != j) m.at({i, j}) = 1.0;
  return m;
}

}  // namespace

DagParams DagParams::init(int num_nodes, std::mt19937_64& rng, double beta,
                          double xi_std, double b_raw_mean) {
  if (num_nodes < 1) throw std::invalid_argument("DagParams: L must be >= 1");
  std::normal_distribution<double> n01(0.0, 1.0);
  DagParams p;
  p.xi = Tensor({num_nodes});
  for (auto& v : p.xi.data) v = xi_std * n01(rng);
  p.b_raw = Tensor({num_nodes, num_nodes});
  for (auto& v : p.b_raw.data) v = b_raw_mean + 0.1 * n01(rng);
  p.beta = beta;
  p.validate();
  return p;
}

void DagParams::validate() const {
  int L = num_nodes();
  if (L < 1) throw std::invalid_argument("DagParams: L must be >= 1");
  if (beta <= 0) throw std::invalid_argument("DagParams: beta must be > 0");
  if (b_raw.shape != Shape{L, L})
    throw std::invalid_argument("DagParams: b_raw must be LxL");
}

Var edge_flows(Tape& tape, Var xi, Var b_raw) {
  int L = xi.shape()[0];
  Var b = v_softplus(b_raw);
  Var col = tape.reshape(xi, {L, 1});
  Var row = tape.reshape(xi, {1, L});
  Var diff = row - col;  // diff[i][j] = xi[j] - xi[i]
  Var mask = tape.constant(offdiag_mask(L));
  return b * diff * mask;
}

Var edge_indicator(Tape& tape, Var xi, Var b_raw, double beta) {
  if (beta <= 0) throw std::invalid_argument("edge_indicator: beta must be > 0");
  Var f = edge_flows(tape, xi, b_raw);
  return v_relu(v_tanh(f * (1.0 / beta)));
}

Tensor edge_flows_value(const DagParams& p) {
  p.validate();
  Tape tape;
  Var xi = tape.track(p.xi);
  Var b_raw = tape.track(p.b_raw);
  return edge_flows(tape, xi, b_raw).val();
}

EdgeScores edge_indicator_value(const DagParams& p) {
  p.validate();
  Tape tape;
  Var xi = tape.track(p.xi);
  Var b_raw = tape.track(p.b_raw);
  return EdgeScores{edge_indicator(tape, xi, b_raw, p.beta).val()};
}

HardDag hard_adjacency(const DagParams& p, double zero_tol) {
  p.validate();
  if (zero_tol < 0) throw std::invalid_argument("hard_adjacency: zero_tol < 0");
  int L = p.num_nodes();
  HardDag dag;
  dag.adjacency = Tensor({L, L});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      if (i == j) continue;
      double b = softplus(p.b_raw.at({i, j}));
      if (b > zero_tol && p.xi[i] < p.xi[j]) dag.adjacency.at({i, j}) = 1.0;
    }
  dag.topo_order.resize(static_cast<size_t>(L));
  std::iota(dag.topo_order.begin(), dag.topo_order.end(), 0);
  std::stable_sort(dag.topo_order.begin(), dag.topo_order.end(),
                   [&](int a, int b) { return p.xi[a] < p.xi[b]; });
  return dag;
}

double trace_acyclicity(const Tensor& adjacency) {
  if (adjacency.ndim() != 2 || adjacency.shape[0] != adjacency.shape[1])
    throw std::invalid_argument("trace_acyclicity: adjacency must be square");
  int L = adjacency.shape[0];
  double total = 0;
  Tensor power = adjacency;
  for (int k = 1; k <= L; ++k) {
    for (int i = 0; i < L; ++i) total += power.at({i, i});
    if (k < L) power = t_matmul(power, adjacency);
  }
  return total;
}

bool is_acyclic(const Tensor& adjacency) {
  return trace_acyclicity(adjacency) == 0.0;
}

DagParams construct_params_for_dag(const Tensor& adjacency, double beta,
                                   double zero_tol) {
  if (adjacency.ndim() != 2 || adjacency.shape[0] != adjacency.shape[1])
    throw std::invalid_argument("construct_params_for_dag: adjacency not square");
  if (!is_acyclic(adjacency))
    throw std::invalid_argument("construct_params_for_dag: input graph is cyclic");
  int L = adjacency.shape[0];

  // xi = topological depth (longest path from any root).
  std::vector<double> depth(static_cast<size_t>(L), 0.0);
  for (int pass = 0; pass < L; ++pass)  // L passes suffice for a DAG
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        if (adjacency.at({i, j}) != 0.0)
          depth[static_cast<size_t>(j)] =
              std::max(depth[static_cast<size_t>(j)],
                       depth[static_cast<size_t>(i)] + 1.0);

  DagParams p;
  p.beta = beta;
  p.xi = Tensor({L});
  for (int i = 0; i < L; ++i) p.xi[i] = depth[static_cast<size_t>(i)];
  p.b_raw = Tensor({L, L});
  double on = softplus_inv(std::max(1.0, 10.0 * zero_tol));
  double off = softplus_inv(zero_tol / 10.0);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      p.b_raw.at({i, j}) = adjacency.at({i, j}) != 0.0 ? on : off;
  return p;
}

DagParams perturb_scores(const DagParams& p, double noise_std,
                         std::mt19937_64& rng) {
  if (noise_std < 0)
    throw std::invalid_argument("perturb_scores: noise_std < 0");
  DagParams out = p;
  if (noise_std == 0) return out;
  std::normal_distribution<double> n(0.0, noise_std);
  for (auto& v : out.xi.data) v += n(rng);
  return out;
}

void BetaSchedule::validate() const {
  if (!(beta_init >= beta_final && beta_final > 0))
    throw std::runtime_error("beta schedule requires beta_init >= beta_final > 0");
  if (update_every < 1)
    throw std::runtime_error("beta schedule requires update_every >= 1");
  if (total_steps < 1)
    throw std::runtime_error("beta schedule requires total_steps >= 1");
}

double BetaSchedule::at(int step) const {
  validate();
  if (step <= 0) return beta_init;
  if (step >= total_steps) return beta_final;
  int num_updates = (total_steps - 1) / update_every + 1;
  int k = std::min(step / update_every, num_updates);
  // geometric interpolation over the update grid
  double ratio = beta_final / beta_init;
  return beta_init * std::pow(ratio, static_cast<double>(k) /
                                         static_cast<double>(num_updates));
}

std::string dag_to_dot(const HardDag& dag, const EdgeScores& scores) {
  int L = dag.adjacency.shape[0];
  std::ostringstream os;
  os << "digraph dag {\n";
  for (int i = 0; i < L; ++i) os << "  n" << i << " [label=\"N" << (i + 1) << "\"];\n";
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (dag.adjacency.at({i, j}) != 0.0)
        os << "  n" << i << " -> n" << j << " [label=\""
           << scores.e.at({i, j}) << "\"];\n";
  os << "}\n";
  return os.str();
}

std::string adjacency_to_csv(const Tensor& adjacency) {
  int L = adjacency.shape[0];
  std::ostringstream os;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j)
      os << (j ? "," : "") << static_cast<int>(adjacency.at({i, j}));
    os << "\n";
  }
  return os.str();
}

}  // namespace cpima
