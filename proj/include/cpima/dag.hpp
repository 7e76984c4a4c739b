#pragma once

#include <random>
#include <string>

#include "cpima/tape.hpp"
#include "cpima/tensor.hpp"

namespace cpima {

// Trainable DAG parametrization: node scores, unconstrained edge metric
// (softplus'd to the nonnegative B) and the sharpness temperature.
struct DagParams {
  Tensor xi;     // [L]
  Tensor b_raw;  // [L][L]; diagonal ignored
  double beta = 1.0;

  int num_nodes() const { return xi.shape.empty() ? 0 : xi.shape[0]; }

  static DagParams init(int num_nodes, std::mt19937_64& rng, double beta,
                        double xi_std = 0.5, double b_raw_mean = 0.5);
  void validate() const;
};

struct EdgeScores {
  Tensor e;  // [L][L], entries in [0,1), zero diagonal
};

struct HardDag {
  Tensor adjacency;            // [L][L] binary
  std::vector<int> topo_order; // stable argsort of xi ascending
};

// F[i][j] = softplus(b_raw)[i][j] * (xi[j] - xi[i]); zeroed diagonal.
Var edge_flows(Tape& tape, Var xi, Var b_raw);

// E = ReLU(tanh(F / beta)).
Var edge_indicator(Tape& tape, Var xi, Var b_raw, double beta);

// Tape-free evaluations for reporting / oracles.
Tensor edge_flows_value(const DagParams& p);
EdgeScores edge_indicator_value(const DagParams& p);

// Limit-of-beta adjacency: edge i->j iff softplus(b_raw)[i][j] > zero_tol
// and xi[i] < xi[j]. topo_order breaks xi ties by node index.
HardDag hard_adjacency(const DagParams& p, double zero_tol = 1e-3);

// sum_{k=1..L} trace(A^k); zero exactly when acyclic.
double trace_acyclicity(const Tensor& adjacency);
bool is_acyclic(const Tensor& adjacency);

// Inverse of hard_adjacency: params whose hard adjacency equals the input.
// Throws std::invalid_argument on a cyclic input.
DagParams construct_params_for_dag(const Tensor& adjacency, double beta = 1.0,
                                   double zero_tol = 1e-3);

// xi <- xi + Normal(0, noise_std^2) elementwise.
DagParams perturb_scores(const DagParams& p, double noise_std,
                         std::mt19937_64& rng);

struct BetaSchedule {
  double beta_init = 1.0;
  double beta_final = 1.0;
  int update_every = 1;
  int total_steps = 1;

  void validate() const;
  // Piecewise-constant geometric interpolation; beta_final at/after
  // total_steps.
  double at(int step) const;
};

std::string dag_to_dot(const HardDag& dag, const EdgeScores& scores);
std::string adjacency_to_csv(const Tensor& adjacency);

}  // namespace cpima
