#pragma once

#include "cpima/codec.hpp"
#include "cpima/gmm.hpp"
#include "cpima/tape.hpp"

namespace cpima {

// Closed-form E_{y1}[log y2] for diagonal Gaussians:
//   -1/2 sum_j [log(2 pi var2_j) + var1_j/var2_j + (mu1_j - mu2_j)^2/var2_j]
double gaussian_cross_entropy_diag(const GaussianDiag& y1,
                                   const GaussianDiag& y2);

// Same for full covariances (symmetric positive definite), via Cholesky:
//   -J/2 log(2 pi) - 1/2 log det C2 - 1/2 (mu1-mu2)^T C2^{-1} (mu1-mu2)
//   - 1/2 tr(C1 C2^{-1})
double gaussian_cross_entropy_full(const Tensor& mu1, const Tensor& cov1,
                                   const Tensor& mu2, const Tensor& cov2);

// Lower triangular Cholesky factor; throws std::runtime_error naming `label`
// if the matrix is not positive definite.
Tensor cholesky(const Tensor& m, const std::string& label);

// Per-sample objective terms on the tape, each of shape [B]:
//   recon      = -sum_m sum_dims gamma-weighted [log vhat + (x-muhat)^2/vhat]
//   entropy    = +sum_j log var_j                      (fused posterior)
//   clustering = sum_k gamma_k [2 log(a_k/gamma_k)
//                 - sum_j (log vt_kj + var_j/vt_kj + (mu_j-mt_kj)^2/vt_kj)]
// gamma is a constant (no gradient through its own formula); the
// gamma*log(a/gamma) term is 0 where gamma is 0.
struct ElboTerms {
  Var recon;
  Var entropy;
  Var clustering;
  Var total;
  std::vector<Var> recon_per_modality;  // each [B]
};

// recon[m] has one entry for shared decoders or K entries (cluster-major)
// for per-cluster decoders; a_flat is the joint tensor flattened to [K];
// gamma is [B, K] row-normalized; gmm means/vars are [K, J].
ElboTerms elbo_terms(Tape& tape, const std::vector<Tensor>& x,
                     const std::vector<std::vector<GaussianVar>>& recon,
                     const GaussianVar& fused, Var gmm_means, Var gmm_vars,
                     Var a_flat, const Tensor& gamma);

// Negative mean per-sample objective plus an optional sparsity penalty on
// the edge metric, lambda_b * sum(offdiag softplus(b_raw)).
Var dataset_loss(Tape& tape, const ElboTerms& terms,
                 const Var* b_raw = nullptr, double lambda_b = 0.0);

struct ElboBreakdown {
  std::vector<double> recon_per_modality;
  double recon = 0.0;
  double entropy = 0.0;
  double clustering = 0.0;
  double total = 0.0;
};

// Batch-mean breakdown; validates total = recon + entropy + clustering.
ElboBreakdown elbo_breakdown(const ElboTerms& terms);

std::string breakdown_json_line(const ElboBreakdown& b, int epoch,
                                double beta, double loss);

}  // namespace cpima
