#include "cpima/causal.hpp"

#include <cmath>
#include <sstream>

namespace cpima {

CausalTables CausalTables::init(const std::vector<int>& arities,
                                std::mt19937_64& rng, double logit_std) {
  CausalTables t;
  t.arities = arities;
  std::normal_distribution<double> n(0.0, logit_std);
  Shape shape(arities.begin(), arities.end());
  for (size_t l = 0; l < arities.size(); ++l) {
    Tensor w(shape);
    for (auto& v : w.data) v = n(rng);
    t.w_logits.push_back(std::move(w));
  }
  t.validate();
  return t;
}

void CausalTables::validate() const {
  if (arities.empty()) throw std::invalid_argument("CausalTables: L must be >= 1");
  for (int c : arities)
    if (c < 1) throw std::invalid_argument("CausalTables: arity must be >= 1");
  if (w_logits.size() != arities.size())
    throw std::invalid_argument("CausalTables: one logit tensor per node required");
  Shape shape(arities.begin(), arities.end());
  for (const auto& w : w_logits)
    if (w.shape != shape)
      throw std::invalid_argument("CausalTables: logit tensor shape mismatch");
}

Tensor CausalTables::table(int l) const {
  const Tensor& logits = w_logits[static_cast<size_t>(l)];
  Tensor lse = t_logsumexp(logits, {l}, /*keepdims=*/true);
  return ew_binary(logits, lse,
                   [](double x, double z) { return std::exp(x - z); });
}

Tensor parent_vector(const std::optional<Tensor>& node_vec, double e_k_ell,
                     int arity) {
  Tensor v = Tensor::full({arity}, (1.0 - e_k_ell) / arity);
  if (e_k_ell != 0.0) {
    if (!node_vec)
      throw std::invalid_argument(
          "parent_vector: node value required when edge score is nonzero");
    if (node_vec->ndim() != 1 || node_vec->shape[0] != arity)
      throw std::invalid_argument("parent_vector: node vector length mismatch");
    for (int c = 0; c < arity; ++c) v[c] += e_k_ell * (*node_vec)[c];
  }
  return v;
}

Tensor node_conditional(const CausalTables& tables, int ell,
                        const std::vector<double>& e_column,
                        const std::vector<std::optional<Tensor>>& node_values) {
  tables.validate();
  int L = tables.num_nodes();
  if (static_cast<int>(e_column.size()) != L)
    throw std::invalid_argument("node_conditional: e_column must have L entries");
  if (static_cast<int>(node_values.size()) != L)
    throw std::invalid_argument("node_conditional: node_values must have L slots");
  Tensor w = tables.table(ell);
  // contract from the highest mode down so mode indices stay valid
  for (int k = L - 1; k >= 0; --k) {
    if (k == ell) continue;
    Tensor v = parent_vector(node_values[static_cast<size_t>(k)],
                             e_column[static_cast<size_t>(k)],
                             tables.arities[static_cast<size_t>(k)]);
    // contracting high modes first keeps lower mode indices stable
    w = t_mode_contract(w, v, k);
  }
  return w;
}

Var joint_tensor(Tape& tape, const std::vector<Var>& w_logits,
                 const std::vector<int>& arities, Var edge_scores,
                 const std::vector<int>& topo_order) {
  int L = static_cast<int>(arities.size());
  if (static_cast<int>(w_logits.size()) != L ||
      static_cast<int>(topo_order.size()) != L)
    throw std::invalid_argument("joint_tensor: inconsistent sizes");

  // position of each node in the topological order
  std::vector<int> pos(static_cast<size_t>(L), -1);
  for (int t = 0; t < L; ++t) pos[static_cast<size_t>(topo_order[static_cast<size_t>(t)])] = t;
  for (int v : pos)
    if (v < 0) throw std::invalid_argument("joint_tensor: topo_order is not a permutation");

  // no edge may point backward in the order
  const Tensor& e_val = edge_scores.val();
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (e_val.at({i, j}) > 0.0 && pos[static_cast<size_t>(i)] > pos[static_cast<size_t>(j)])
        throw std::invalid_argument(
            "joint_tensor: edge " + std::to_string(i) + "->" + std::to_string(j) +
            " points backward in topo_order");

  Var a = tape.constant(Tensor::full(Shape(static_cast<size_t>(L), 1), 1.0));
  for (int t = 0; t < L; ++t) {
    int ell = topo_order[static_cast<size_t>(t)];
    Var w = tape.softmax(w_logits[static_cast<size_t>(ell)], ell);
    // average out descendants-in-order: they cannot be parents
    for (int k = 0; k < L; ++k)
      if (pos[static_cast<size_t>(k)] > t) w = tape.mean(w, {k}, /*keepdims=*/true);
    // ancestors-in-order blend between averaged-out and conditioned
    for (int k = 0; k < L; ++k) {
      if (pos[static_cast<size_t>(k)] >= t) continue;
      Var e_kl = tape.reshape(
          tape.slice(tape.slice(edge_scores, 0, k, 1), 1, ell, 1), {});
      Var avg = tape.mean(w, {k}, /*keepdims=*/true);
      w = e_kl * w + (1.0 - e_kl) * avg;
    }
    a = a * w;
  }
  return a;
}

JointTensor joint_tensor_value(const CausalTables& tables,
                               const EdgeScores& scores,
                               const std::vector<int>& topo_order) {
  tables.validate();
  Tape tape;
  std::vector<Var> logits;
  for (const auto& w : tables.w_logits) logits.push_back(tape.track(w));
  Var e = tape.track(scores.e);
  Var a = joint_tensor(tape, logits, tables.arities, e, topo_order);
  return JointTensor{a.val()};
}

JointTensor brute_force_joint(const CausalTables& tables, const HardDag& dag) {
  tables.validate();
  int L = tables.num_nodes();
  if (L > 10) throw std::length_error("brute_force_joint: L > 10");
  Shape shape = tables.table_shape();
  int total = shape_size(shape);
  if (total > 4096)
    throw std::length_error("brute_force_joint: outcome space exceeds 4096");

  std::vector<Tensor> w(static_cast<size_t>(L));
  for (int l = 0; l < L; ++l) w[static_cast<size_t>(l)] = tables.table(l);

  Tensor joint(shape);
  for (int flat = 0; flat < total; ++flat) {
    auto idx = unflatten_index(shape, flat);
    double prob = 1.0;
    for (int l = 0; l < L; ++l) {
      // pi_l with parents fixed to their outcome, non-parents averaged out
      std::vector<double> e_col(static_cast<size_t>(L), 0.0);
      std::vector<std::optional<Tensor>> vals(static_cast<size_t>(L));
      for (int k = 0; k < L; ++k) {
        if (k == l) continue;
        if (dag.adjacency.at({k, l}) != 0.0) {
          e_col[static_cast<size_t>(k)] = 1.0;
          Tensor onehot({tables.arities[static_cast<size_t>(k)]});
          onehot[idx[static_cast<size_t>(k)]] = 1.0;
          vals[static_cast<size_t>(k)] = std::move(onehot);
        }
      }
      Tensor pi = node_conditional(tables, l, e_col, vals);
      prob *= pi[idx[static_cast<size_t>(l)]];
    }
    joint.data[static_cast<size_t>(flat)] = prob;
  }
  double z = t_sum_all(joint);
  for (auto& v : joint.data) v /= z;
  return JointTensor{joint};
}

std::string conditional_table_csv(const CausalTables& tables,
                                  const HardDag& dag, int ell) {
  tables.validate();
  int L = tables.num_nodes();
  std::vector<int> parents;
  for (int k = 0; k < L; ++k)
    if (dag.adjacency.at({k, ell}) != 0.0) parents.push_back(k);

  Shape pshape;
  for (int k : parents) pshape.push_back(tables.arities[static_cast<size_t>(k)]);
  int num_cfg = pshape.empty() ? 1 : shape_size(pshape);

  std::ostringstream os;
  os << "node," << (ell + 1);
  for (int k : parents) os << ",parent_N" << (k + 1);
  for (int c = 0; c < tables.arities[static_cast<size_t>(ell)]; ++c)
    os << ",p(n=" << c << ")";
  os << "\n";
  for (int cfg = 0; cfg < num_cfg; ++cfg) {
    auto pidx = pshape.empty() ? std::vector<int>{} : unflatten_index(pshape, cfg);
    std::vector<double> e_col(static_cast<size_t>(L), 0.0);
    std::vector<std::optional<Tensor>> vals(static_cast<size_t>(L));
    for (size_t pi = 0; pi < parents.size(); ++pi) {
      int k = parents[pi];
      e_col[static_cast<size_t>(k)] = 1.0;
      Tensor onehot({tables.arities[static_cast<size_t>(k)]});
      onehot[pidx[pi]] = 1.0;
      vals[static_cast<size_t>(k)] = std::move(onehot);
    }
    Tensor pi_l = node_conditional(tables, ell, e_col, vals);
    os << "N" << (ell + 1);
    for (size_t pi = 0; pi < parents.size(); ++pi) os << "," << pidx[pi];
    for (int c = 0; c < pi_l.size(); ++c) os << "," << pi_l[c];
    os << "\n";
  }
  return os.str();
}

}  // namespace cpima
