#pragma once

#include <optional>
#include <random>

#include "cpima/dag.hpp"
#include "cpima/tape.hpp"

namespace cpima {

// Per-node conditional probability tables as unconstrained logits; the
// derived table W^l = softmax(logits[l]) along mode l sums to one over
// outcomes of node l for every parent configuration.
struct CausalTables {
  std::vector<Tensor> w_logits;  // L tensors, each of shape C1 x ... x CL
  std::vector<int> arities;

  int num_nodes() const { return static_cast<int>(arities.size()); }
  Shape table_shape() const { return Shape(arities.begin(), arities.end()); }

  static CausalTables init(const std::vector<int>& arities,
                           std::mt19937_64& rng, double logit_std = 0.1);
  void validate() const;
  // softmax of logits[l] along mode l (tape-free).
  Tensor table(int l) const;
};

struct JointTensor {
  Tensor a;  // C1 x ... x CL, nonnegative, sums to 1
};

// v = (1/C) 1 - e * ((1/C) 1 - n); uniform at e=0, the node vector at e=1.
Tensor parent_vector(const std::optional<Tensor>& node_vec, double e_k_ell,
                     int arity);

// pi_l: W^l contracted on every mode k != l against parent_vector(k).
// node_values[k] may be empty only when e_column[k] == 0.
Tensor node_conditional(const CausalTables& tables, int ell,
                        const std::vector<double>& e_column,
                        const std::vector<std::optional<Tensor>>& node_values);

// Joint distribution tensor over all node outcomes, by the inductive
// blend/reduce recursion over the topological order. Differentiable: w_logit
// Vars and the edge score Var participate in the tape.
Var joint_tensor(Tape& tape, const std::vector<Var>& w_logits,
                 const std::vector<int>& arities, Var edge_scores,
                 const std::vector<int>& topo_order);

// Tape-free convenience evaluation.
JointTensor joint_tensor_value(const CausalTables& tables,
                               const EdgeScores& scores,
                               const std::vector<int>& topo_order);

// Enumeration oracle over the Markov factorization; requires L <= 10 and
// product of arities <= 4096.
JointTensor brute_force_joint(const CausalTables& tables, const HardDag& dag);

// p(N_l = n | parent configuration) rows for reporting.
std::string conditional_table_csv(const CausalTables& tables,
                                  const HardDag& dag, int ell);

}  // namespace cpima
