#include "cpima/elbo.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace cpima {

double gaussian_cross_entropy_diag(const GaussianDiag& y1,
                                   const GaussianDiag& y2) {
  if (y1.mean.shape != y2.mean.shape || y1.var.shape != y2.var.shape)
    throw std::invalid_argument("gaussian_cross_entropy_diag: shape mismatch");
  double acc = 0.0;
  for (int j = 0; j < y1.mean.size(); ++j) {
    double d = y1.mean[j] - y2.mean[j];
    acc += std::log(2.0 * std::numbers::pi * y2.var[j]) +
           y1.var[j] / y2.var[j] + d * d / y2.var[j];
  }
  return -0.5 * acc;
}

Tensor cholesky(const Tensor& m, const std::string& label) {
  if (m.ndim() != 2 || m.shape[0] != m.shape[1])
    throw std::invalid_argument("cholesky: " + label + " must be square");
  int n = m.shape[0];
  Tensor l({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m.at({i, j});
      for (int k = 0; k < j; ++k) s -= l.at({i, k}) * l.at({j, k});
      if (i == j) {
        if (s <= 0.0)
          throw std::runtime_error("cholesky: " + label +
                                   " is not positive definite");
        l.at({i, i}) = std::sqrt(s);
      } else {
        l.at({i, j}) = s / l.at({j, j});
      }
    }
  }
  return l;
}

namespace {

// solve L y = b (lower triangular)
std::vector<double> forward_solve(const Tensor& l, const std::vector<double>& b) {
  int n = l.shape[0];
  std::vector<double> y(b);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) y[static_cast<size_t>(i)] -= l.at({i, k}) * y[static_cast<size_t>(k)];
    y[static_cast<size_t>(i)] /= l.at({i, i});
  }
  return y;
}

}  // namespace

double gaussian_cross_entropy_full(const Tensor& mu1, const Tensor& cov1,
                                   const Tensor& mu2, const Tensor& cov2) {
  int J = mu1.size();
  if (mu2.size() != J || cov1.shape != Shape{J, J} || cov2.shape != Shape{J, J})
    throw std::invalid_argument("gaussian_cross_entropy_full: shape mismatch");
  cholesky(cov1, "cov1");  // validates SPD of the first argument too
  Tensor l2 = cholesky(cov2, "cov2");

  double logdet2 = 0.0;
  for (int i = 0; i < J; ++i) logdet2 += 2.0 * std::log(l2.at({i, i}));

  std::vector<double> d(static_cast<size_t>(J));
  for (int i = 0; i < J; ++i) d[static_cast<size_t>(i)] = mu1[i] - mu2[i];
  std::vector<double> y = forward_solve(l2, d);
  double quad = 0.0;
  for (double v : y) quad += v * v;  // d^T C2^{-1} d = ||L^{-1} d||^2

  // tr(C1 C2^{-1}) = sum_ij C1_ij (C2^{-1})_ij; columns of C2^{-1} via solves
  double tr = 0.0;
  for (int col = 0; col < J; ++col) {
    std::vector<double> e(static_cast<size_t>(J), 0.0);
    e[static_cast<size_t>(col)] = 1.0;
    std::vector<double> y1 = forward_solve(l2, e);
    // back substitution with L^T
    std::vector<double> xcol(y1);
    for (int i = J - 1; i >= 0; --i) {
      for (int k = i + 1; k < J; ++k)
        xcol[static_cast<size_t>(i)] -= l2.at({k, i}) * xcol[static_cast<size_t>(k)];
      xcol[static_cast<size_t>(i)] /= l2.at({i, i});
    }
    for (int row = 0; row < J; ++row)
      tr += cov1.at({row, col}) * xcol[static_cast<size_t>(row)];
  }

  return -0.5 * J * std::log(2.0 * std::numbers::pi) - 0.5 * logdet2 -
         0.5 * quad - 0.5 * tr;
}

ElboTerms elbo_terms(Tape& tape, const std::vector<Tensor>& x,
                     const std::vector<std::vector<GaussianVar>>& recon,
                     const GaussianVar& fused, Var gmm_means, Var gmm_vars,
                     Var a_flat, const Tensor& gamma) {
  if (x.empty() || recon.size() != x.size())
    throw std::invalid_argument("elbo_terms: modality count mismatch");
  int B = fused.mu.shape()[0];
  int J = fused.mu.shape()[1];
  int K = a_flat.val().size();
  if (gamma.shape != Shape{B, K})
    throw std::invalid_argument("elbo_terms: gamma must be [batch, clusters]");
  if (gmm_means.shape() != Shape{K, J} || gmm_vars.shape() != Shape{K, J})
    throw std::invalid_argument("elbo_terms: gmm shape mismatch");
  for (int b = 0; b < B; ++b) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += gamma.at({b, k});
    if (std::abs(s - 1.0) > 1e-8)
      throw std::invalid_argument("elbo_terms: gamma rows must sum to 1");
  }

  Var gamma_c = tape.constant(gamma);

  ElboTerms out;
  // reconstruction: -sum_dims [log vhat + (x - muhat)^2 / vhat], per cluster
  // weighted by gamma when the decoder is per-cluster
  bool first = true;
  for (size_t m = 0; m < x.size(); ++m) {
    const auto& heads = recon[m];
    if (heads.size() != 1 && heads.size() != static_cast<size_t>(K))
      throw std::invalid_argument("elbo_terms: decoder head count mismatch");
    Var xm = tape.constant(x[m]);
    Var term{nullptr, -1};
    for (size_t k = 0; k < heads.size(); ++k) {
      Var per_dim = v_log(heads[k].var) +
                    v_square(xm - heads[k].mu) / heads[k].var;
      Var per_sample = -tape.sum(per_dim, {1});  // [B]
      if (heads.size() > 1) {
        Var gk = tape.reshape(tape.slice(gamma_c, 1, static_cast<int>(k), 1), {B});
        per_sample = gk * per_sample;
      }
      term = k == 0 ? per_sample : term + per_sample;
    }
    out.recon_per_modality.push_back(term);
    out.recon = first ? term : out.recon + term;
    first = false;
  }

  // entropy of the fused posterior
  out.entropy = tape.sum(v_log(fused.var), {1});  // [B]

  // clustering: prior part 2 gamma (log a - log gamma) + fit part
  Var log_a = v_log(a_flat);                       // [K]
  Var la2 = tape.reshape(log_a, {1, K});           // broadcast over batch
  Var prior = tape.sum(gamma_c * la2, {1}) * 2.0;  // [B]
  Tensor neg_ent({B});
  for (int b = 0; b < B; ++b) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
      double g = gamma.at({b, k});
      if (g > 0.0) s += g * std::log(g);
    }
    neg_ent[b] = -2.0 * s;
  }
  prior = prior + tape.constant(neg_ent);

  Var mu3 = tape.reshape(fused.mu, {B, 1, J});
  Var var3 = tape.reshape(fused.var, {B, 1, J});
  Var mt = tape.reshape(gmm_means, {1, K, J});
  Var vt = tape.reshape(gmm_vars, {1, K, J});
  Var fit = v_log(vt) + var3 / vt + v_square(mu3 - mt) / vt;  // [B,K,J]
  Var fit_k = tape.sum(fit, {2});                             // [B,K]
  Var weighted = tape.sum(gamma_c * fit_k, {1});              // [B]
  out.clustering = prior - weighted;

  out.total = out.recon + out.entropy + out.clustering;
  return out;
}

Var dataset_loss(Tape& tape, const ElboTerms& terms, const Var* b_raw,
                 double lambda_b) {
  Var loss = -tape.mean(terms.total);
  if (b_raw && lambda_b != 0.0) {
    int L = b_raw->shape()[0];
    Tensor offdiag({L, L});
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) offdiag.at({i, j}) = i == j ? 0.0 : 1.0;
    Var penalty = tape.sum(v_softplus(*b_raw) * tape.constant(offdiag));
    loss = loss + lambda_b * penalty;
  }
  if (!all_finite(loss.val()))
    throw std::runtime_error("dataset_loss: non-finite loss");
  return loss;
}

ElboBreakdown elbo_breakdown(const ElboTerms& terms) {
  auto mean_of = [](const Var& v) {
    double s = 0.0;
    for (double x : v.val().data) s += x;
    return s / v.val().size();
  };
  ElboBreakdown b;
  b.recon = mean_of(terms.recon);
  b.entropy = mean_of(terms.entropy);
  b.clustering = mean_of(terms.clustering);
  b.total = mean_of(terms.total);
  for (const Var& r : terms.recon_per_modality)
    b.recon_per_modality.push_back(mean_of(r));
  double scale = std::max({1.0, std::abs(b.recon), std::abs(b.entropy),
                           std::abs(b.clustering)});
  if (std::abs(b.total - (b.recon + b.entropy + b.clustering)) > 1e-10 * scale)
    throw std::runtime_error("elbo_breakdown: terms do not add up");
  return b;
}

std::string breakdown_json_line(const ElboBreakdown& b, int epoch, double beta,
                                double loss) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["beta"] = beta;
  j["loss"] = loss;
  j["elbo"] = b.total;
  j["recon"] = b.recon;
  j["recon_per_modality"] = b.recon_per_modality;
  j["entropy"] = b.entropy;
  j["clustering"] = b.clustering;
  return j.dump();
}

}  // namespace cpima
