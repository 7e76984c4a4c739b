#include "cpima/report.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cpima {

Tensor contingency(const std::vector<int>& assignment, int num_assign,
                   const std::vector<int>& factor, int num_factor) {
  if (assignment.size() != factor.size())
    throw std::invalid_argument("contingency: length mismatch");
  Tensor counts({num_assign, num_factor});
  for (size_t i = 0; i < assignment.size(); ++i) {
    int a = assignment[i], f = factor[i];
    if (a < 0 || a >= num_assign || f < 0 || f >= num_factor)
      throw std::invalid_argument("contingency: label out of range");
    counts.at({a, f}) += 1.0;
  }
  return counts;
}

double purity(const Tensor& counts) {
  double total = t_sum_all(counts);
  if (total <= 0.0) throw std::invalid_argument("purity: empty table");
  double hit = 0.0;
  for (int i = 0; i < counts.shape[0]; ++i) {
    double best = 0.0;
    for (int j = 0; j < counts.shape[1]; ++j)
      best = std::max(best, counts.at({i, j}));
    hit += best;
  }
  return hit / total;
}

double nmi(const Tensor& counts) {
  double total = t_sum_all(counts);
  if (total <= 0.0) throw std::invalid_argument("nmi: empty table");
  int R = counts.shape[0], C = counts.shape[1];
  std::vector<double> pr(static_cast<size_t>(R), 0.0), pc(static_cast<size_t>(C), 0.0);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      pr[static_cast<size_t>(i)] += counts.at({i, j}) / total;
      pc[static_cast<size_t>(j)] += counts.at({i, j}) / total;
    }
  double hx = 0.0, hy = 0.0, mi = 0.0;
  for (double p : pr)
    if (p > 0.0) hx -= p * std::log(p);
  for (double p : pc)
    if (p > 0.0) hy -= p * std::log(p);
  if (hx == 0.0 || hy == 0.0) return 0.0;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      double p = counts.at({i, j}) / total;
      if (p > 0.0)
        mi += p * std::log(p / (pr[static_cast<size_t>(i)] * pc[static_cast<size_t>(j)]));
    }
  return mi / std::sqrt(hx * hy);
}

std::vector<int> cluster_labels(const std::vector<Responsibilities>& gammas) {
  std::vector<int> out;
  out.reserve(gammas.size());
  for (const Responsibilities& g : gammas)
    out.push_back(static_cast<int>(
        std::max_element(g.gamma.data.begin(), g.gamma.data.end()) -
        g.gamma.data.begin()));
  return out;
}

std::vector<int> node_labels(const std::vector<Responsibilities>& gammas,
                             int node) {
  std::vector<int> out;
  out.reserve(gammas.size());
  for (const Responsibilities& g : gammas) {
    if (node < 0 || node >= g.gamma.ndim())
      throw std::invalid_argument("node_labels: node out of range");
    std::vector<int> axes;
    for (int l = 0; l < g.gamma.ndim(); ++l)
      if (l != node) axes.push_back(l);
    Tensor marg = axes.empty() ? g.gamma : t_sum(g.gamma, axes, false);
    out.push_back(static_cast<int>(
        std::max_element(marg.data.begin(), marg.data.end()) -
        marg.data.begin()));
  }
  return out;
}

std::vector<int> match_nodes_to_factors(
    const std::vector<std::vector<double>>& purity_matrix) {
  int L = static_cast<int>(purity_matrix.size());
  if (L == 0) return {};
  int F = static_cast<int>(purity_matrix[0].size());
  // small L, F: exhaustively try node orderings for the best total purity
  std::vector<int> nodes(static_cast<size_t>(L));
  std::iota(nodes.begin(), nodes.end(), 0);
  std::vector<int> best(static_cast<size_t>(F), -1);
  double best_score = -1.0;
  std::sort(nodes.begin(), nodes.end());
  do {
    double score = 0.0;
    std::vector<int> cand(static_cast<size_t>(F), -1);
    for (int f = 0; f < F && f < L; ++f) {
      cand[static_cast<size_t>(f)] = nodes[static_cast<size_t>(f)];
      score += purity_matrix[static_cast<size_t>(nodes[static_cast<size_t>(f)])]
                            [static_cast<size_t>(f)];
    }
    if (score > best_score) {
      best_score = score;
      best = cand;
    }
  } while (std::next_permutation(nodes.begin(), nodes.end()));
  return best;
}

std::string contingency_csv(const Tensor& counts, const std::string& row_name,
                            const std::string& col_name) {
  std::ostringstream os;
  os << row_name;
  for (int j = 0; j < counts.shape[1]; ++j) os << "," << col_name << j;
  os << ",row_total\n";
  for (int i = 0; i < counts.shape[0]; ++i) {
    os << i;
    double rt = 0.0;
    for (int j = 0; j < counts.shape[1]; ++j) {
      os << "," << counts.at({i, j});
      rt += counts.at({i, j});
    }
    os << "," << rt << "\n";
  }
  return os.str();
}

}  // namespace cpima
