#pragma once

#include <random>

#include "cpima/causal.hpp"
#include "cpima/tensor.hpp"

namespace cpima {

inline constexpr double kVarFloor = 1e-6;

// Diagonal Gaussian over the latent space; also used for encoder outputs
// and the fused posterior.
struct GaussianDiag {
  Tensor mean;  // [J]
  Tensor var;   // [J], entries >= kVarFloor

  void validate(double floor = kVarFloor) const;
};

// Mixture components indexed by the causal outcome multi-index: one
// diagonal Gaussian per cell of the C1 x ... x CL grid.
struct LatentGmm {
  Tensor means;  // C1 x ... x CL x J
  Tensor vars;   // same shape
  std::vector<int> arities;
  int latent_dim = 0;

  int num_clusters() const;
  void validate(double floor = kVarFloor) const;
  GaussianDiag component(int flat_cluster) const;

  static LatentGmm init(const std::vector<int>& arities, int latent_dim,
                        std::mt19937_64& rng, double mean_std = 1.0,
                        double init_var = 1.0);
};

// Posterior over outcomes for one datapoint; same grid shape as the joint.
struct Responsibilities {
  Tensor gamma;  // C1 x ... x CL, entries in [0,1], sums to 1
};

double log_density_diag(const Tensor& z, const GaussianDiag& g);

// gamma_c  proportional to  A_c * N(z; mean_c, var_c), normalized in
// log-space so distant clusters cannot underflow to an all-zero vector.
Responsibilities responsibilities(const Tensor& z, const LatentGmm& gmm,
                                  const JointTensor& a);

// One pass of the weighted-moment maximization over the whole batch.
// Clusters with negligible total weight keep their previous mean and get
// the pooled data variance so they stay reachable.
LatentGmm block_update(const LatentGmm& prev, const std::vector<Tensor>& mus,
                       const std::vector<Tensor>& vars,
                       const std::vector<Responsibilities>& gammas,
                       double floor = kVarFloor);

std::string gmm_to_csv(const LatentGmm& gmm);
std::string labels_to_csv(const std::vector<Responsibilities>& gammas);

}  // namespace cpima
