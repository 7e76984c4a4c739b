#pragma once

#include <string>

#include "cpima/gmm.hpp"

namespace cpima {

// counts[i][j] = points with cluster/node outcome i and true factor value j.
Tensor contingency(const std::vector<int>& assignment, int num_assign,
                   const std::vector<int>& factor, int num_factor);

// Fraction of points covered by the majority factor value of their cluster.
double purity(const Tensor& counts);

// Normalized mutual information, I(X;Y)/sqrt(H(X) H(Y)); 0 when a marginal
// is degenerate.
double nmi(const Tensor& counts);

// Argmax cluster index per point from full grid responsibilities.
std::vector<int> cluster_labels(const std::vector<Responsibilities>& gammas);

// Per-point outcome of one DAG node: argmax of gamma marginalized onto that
// node's mode.
std::vector<int> node_labels(const std::vector<Responsibilities>& gammas,
                             int node);

// Best one-to-one matching of DAG nodes to generative factors, maximizing
// total purity; purity_matrix is [nodes][factors]. Returns factor -> node
// (-1 when there are fewer nodes than factors).
std::vector<int> match_nodes_to_factors(
    const std::vector<std::vector<double>>& purity_matrix);

std::string contingency_csv(const Tensor& counts, const std::string& row_name,
                            const std::string& col_name);

}  // namespace cpima
