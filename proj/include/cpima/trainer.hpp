#pragma once

#include <cstdint>
#include <random>

#include "cpima/codec.hpp"
#include "cpima/dag.hpp"
#include "cpima/elbo.hpp"
#include "cpima/gmm.hpp"

namespace cpima {

// One modality = one [N, D] matrix; rows are samples.
struct Dataset {
  std::vector<Tensor> modalities;

  int n() const { return modalities.empty() ? 0 : modalities.front().shape[0]; }
  int num_modalities() const { return static_cast<int>(modalities.size()); }
  void validate() const;
};

enum class PretrainMode { None, Reconstruction, UnitVae };
enum class DecoderKind { Neural, ExpertCurve };

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 64;
  int latent_dim = 2;
  std::vector<int> arities = {2, 2, 2};
  BetaSchedule beta{1.0, 0.05, 10, 1000};
  double xi_noise_std = 0.0;
  int xi_noise_every = 0;  // steps between noise kicks; 0 disables
  int extra_a_steps = 1;   // gradient steps on {w_logits, xi, b_raw} per GMM update
  int gmm_iters = 1;       // GMM update rounds per epoch
  PretrainMode pretrain_mode = PretrainMode::Reconstruction;
  int pretrain_epochs = 10;
  uint64_t seed = 0;
  double lambda_b = 0.0;
  bool plain_sgd = false;  // default optimizer is Adam
  double grad_clip = 10.0;
  std::vector<int> enc_hidden = {48};
  std::vector<int> dec_hidden = {48};
  std::vector<DecoderKind> decoder_kinds;  // per modality; empty = all neural

  void validate() const;
  int num_clusters() const;
};

struct AdamState {
  std::vector<Tensor> m, v;
  int64_t t = 0;
};

struct TrainState {
  std::vector<Mlp> encoders;
  std::vector<Mlp> decoders;  // placeholder entries for expert modalities
  // per modality: K expert parameter sets (empty for neural modalities)
  std::vector<std::vector<ExpertCurveRaw>> experts;
  DagParams dag;
  CausalTables tables;
  LatentGmm gmm;
  AdamState opt;
  int epoch = 0;
  int64_t step = 0;
  std::mt19937_64 rng;
};

TrainState init_state(const Dataset& data, const TrainConfig& cfg);

// Pointers to every gradient-trained tensor, fixed order. a_group marks the
// parameters that also move in the extra post-GMM gradient steps.
struct ParamRef {
  Tensor* t;
  bool a_group;
};
std::vector<ParamRef> param_refs(TrainState& s);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double beta = 0.0;
  ElboBreakdown elbo;
  Tensor hard_adjacency;
  std::vector<int> topo_order;
  std::vector<int> occupancy;  // dataset points per argmax-gamma cluster
};

// Encoder warm-up + GMM initialization per the pre-training regimen.
void pretrain(TrainState& s, const Dataset& data, const TrainConfig& cfg);

// One pass of batched gradient steps followed by the per-epoch GMM block
// update and the extra gradient steps on the joint-tensor parameters.
EpochRecord train_epoch(TrainState& s, const Dataset& data,
                        const TrainConfig& cfg);

struct FitResult {
  std::vector<EpochRecord> history;
};

FitResult fit(TrainState& s, const Dataset& data, const TrainConfig& cfg);

// Deterministic dataset-level responsibilities from the fused posterior
// means (no sampling).
std::vector<Responsibilities> dataset_responsibilities(const TrainState& s,
                                                       const Dataset& data,
                                                       const TrainConfig& cfg);

// Fused posterior means [N, J] for latent-space exports.
Tensor fused_means(const TrainState& s, const Dataset& data,
                   const TrainConfig& cfg);

// Full-objective forward pass on data rows [start, start+len) with a fixed
// eps draw. When grads is non-null, runs backward and fills unclipped
// gradients in param_refs order. Parameters are not modified. The
// responsibilities are recomputed from the sampled z unless gamma_override
// pins them ([B, K]); gamma_out reports the gamma actually used, which lets
// finite-difference checks hold the stop-gradient gamma fixed.
double evaluate_batch(TrainState& s, const Dataset& data,
                      const TrainConfig& cfg, int start, int len,
                      const Tensor& eps, std::vector<Tensor>* grads = nullptr,
                      const Tensor* gamma_override = nullptr,
                      Tensor* gamma_out = nullptr);

void save_checkpoint(const TrainState& s, const std::string& path);
TrainState load_checkpoint(const std::string& path, const Dataset& data,
                           const TrainConfig& cfg);

}  // namespace cpima
