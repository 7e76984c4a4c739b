#include "cpima/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cpima {

void Dataset::validate() const {
  if (modalities.empty()) throw std::invalid_argument("Dataset: no modalities");
  for (const Tensor& m : modalities) {
    if (m.ndim() != 2 || m.shape[0] != n())
      throw std::invalid_argument("Dataset: modalities must be [N, D] with equal N");
    if (!all_finite(m)) throw std::invalid_argument("Dataset: non-finite data");
  }
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (epochs < 0 || batch_size < 1 || latent_dim < 1 || extra_a_steps < 0 ||
      gmm_iters < 0 || pretrain_epochs < 0 || xi_noise_every < 0)
    throw std::invalid_argument("TrainConfig: counts out of range");
  if (arities.empty()) throw std::invalid_argument("TrainConfig: empty arities");
  for (int c : arities)
    if (c < 1) throw std::invalid_argument("TrainConfig: arities must be >= 1");
  beta.validate();
}

int TrainConfig::num_clusters() const {
  return shape_size(Shape(arities.begin(), arities.end()));
}

namespace {

std::vector<DecoderKind> decoder_kinds_of(const TrainConfig& cfg, int M) {
  if (cfg.decoder_kinds.empty())
    return std::vector<DecoderKind>(static_cast<size_t>(M), DecoderKind::Neural);
  if (cfg.decoder_kinds.size() != static_cast<size_t>(M))
    throw std::invalid_argument("TrainConfig: decoder_kinds count mismatch");
  return cfg.decoder_kinds;
}

MlpSpec encoder_spec(int dim, const TrainConfig& cfg) {
  MlpSpec s;
  s.widths.push_back(dim);
  for (int w : cfg.enc_hidden) s.widths.push_back(w);
  s.widths.push_back(2 * cfg.latent_dim);
  return s;
}

MlpSpec decoder_spec(int dim, const TrainConfig& cfg) {
  MlpSpec s;
  s.widths.push_back(cfg.latent_dim);
  for (int w : cfg.dec_hidden) s.widths.push_back(w);
  s.widths.push_back(2 * dim);
  return s;
}

Tensor curve_grid(int dim) {
  Tensor g({dim});
  for (int i = 0; i < dim; ++i) g[i] = static_cast<double>(i) / (dim - 1);
  return g;
}

Tensor rows(const Tensor& m, int start, int len) {
  Tensor out({len, m.shape[1]});
  std::copy(m.data.begin() + static_cast<long>(start) * m.shape[1],
            m.data.begin() + static_cast<long>(start + len) * m.shape[1],
            out.data.begin());
  return out;
}

double param_norm(const std::vector<ParamRef>& refs) {
  double s = 0.0;
  for (const ParamRef& r : refs)
    for (double v : r.t->data) s += v * v;
  return std::sqrt(s);
}

enum class ForwardMode { Full, Recon, UnitVae };

struct ForwardOut {
  Var loss;
  ElboTerms terms;
  std::vector<Var> leaves;  // parallel to param_refs order
  Tensor gamma;             // [B, K], Full mode only
  Tensor z;                 // [B, J]
};

// One batched forward pass; leaves come out in param_refs order so the
// optimizer can pair gradients with tensors.
ForwardOut batch_forward(Tape& tape, TrainState& s, const TrainConfig& cfg,
                         const std::vector<Tensor>& xb, double beta,
                         ForwardMode mode, const Tensor& eps,
                         const Tensor* gamma_override = nullptr) {
  int M = static_cast<int>(xb.size());
  int B = xb[0].shape[0];
  int J = cfg.latent_dim;
  int K = cfg.num_clusters();
  auto kinds = decoder_kinds_of(cfg, M);

  ForwardOut out;
  std::vector<std::vector<Var>> enc_vars, dec_vars;
  std::vector<std::vector<std::vector<Var>>> exp_vars(static_cast<size_t>(M));
  for (int m = 0; m < M; ++m)
    enc_vars.push_back(track_params(tape, s.encoders[static_cast<size_t>(m)].params));
  for (int m = 0; m < M; ++m) {
    if (kinds[static_cast<size_t>(m)] == DecoderKind::Neural) {
      dec_vars.push_back(track_params(tape, s.decoders[static_cast<size_t>(m)].params));
    } else {
      dec_vars.emplace_back();
      for (const ExpertCurveRaw& raw : s.experts[static_cast<size_t>(m)]) {
        std::vector<Var> vs;
        vs.push_back(tape.track(raw.raw_breakpoint));
        vs.push_back(tape.track(raw.slope1));
        vs.push_back(tape.track(raw.slope2));
        vs.push_back(tape.track(raw.intercept));
        vs.push_back(tape.track(raw.log_var));
        exp_vars[static_cast<size_t>(m)].push_back(std::move(vs));
      }
    }
  }
  Var xi = tape.track(s.dag.xi);
  Var braw = tape.track(s.dag.b_raw);
  std::vector<Var> wl;
  for (const Tensor& w : s.tables.w_logits) wl.push_back(tape.track(w));

  for (int m = 0; m < M; ++m)
    for (Var v : enc_vars[static_cast<size_t>(m)]) out.leaves.push_back(v);
  for (int m = 0; m < M; ++m) {
    if (kinds[static_cast<size_t>(m)] == DecoderKind::Neural)
      for (Var v : dec_vars[static_cast<size_t>(m)]) out.leaves.push_back(v);
    else
      for (const auto& vs : exp_vars[static_cast<size_t>(m)])
        for (Var v : vs) out.leaves.push_back(v);
  }
  out.leaves.push_back(xi);
  out.leaves.push_back(braw);
  for (Var v : wl) out.leaves.push_back(v);

  // encode -> fuse -> sample
  std::vector<GaussianVar> experts_q;
  for (int m = 0; m < M; ++m)
    experts_q.push_back(encode(tape, s.encoders[static_cast<size_t>(m)].spec,
                               enc_vars[static_cast<size_t>(m)],
                               tape.constant(xb[static_cast<size_t>(m)]), J));
  GaussianVar fused = fuse_poe(tape, experts_q);
  Var z = sample_latent(tape, fused, eps);
  out.z = z.val();

  // decode
  std::vector<std::vector<GaussianVar>> recon(static_cast<size_t>(M));
  for (int m = 0; m < M; ++m) {
    int dim = xb[static_cast<size_t>(m)].shape[1];
    if (kinds[static_cast<size_t>(m)] == DecoderKind::Neural) {
      recon[static_cast<size_t>(m)].push_back(decode_neural(
          tape, s.decoders[static_cast<size_t>(m)].spec,
          dec_vars[static_cast<size_t>(m)], z, dim));
    } else {
      Tensor grid = curve_grid(dim);
      for (const auto& vs : exp_vars[static_cast<size_t>(m)]) {
        GaussianVar head;
        head.mu = tape.reshape(decode_expert_curve(tape, vs, grid), {1, dim});
        head.var = tape.reshape(v_exp(vs[4]), {1, 1});
        recon[static_cast<size_t>(m)].push_back(head);
      }
    }
  }

  if (mode != ForwardMode::Full) {
    // warm-up losses: reconstruction only, or reconstruction + unit-normal KL
    Tensor unif = Tensor::full({B, K}, 1.0 / K);
    Var recon_sum{nullptr, -1};
    bool first = true;
    Var unif_c = tape.constant(unif);
    for (int m = 0; m < M; ++m) {
      for (size_t k = 0; k < recon[static_cast<size_t>(m)].size(); ++k) {
        const GaussianVar& h = recon[static_cast<size_t>(m)][k];
        Var xm = tape.constant(xb[static_cast<size_t>(m)]);
        Var per = -tape.sum(v_log(h.var) + v_square(xm - h.mu) / h.var, {1});
        if (recon[static_cast<size_t>(m)].size() > 1)
          per = per * (1.0 / static_cast<double>(recon[static_cast<size_t>(m)].size()));
        recon_sum = first ? per : recon_sum + per;
        first = false;
      }
    }
    Var loss = -tape.mean(recon_sum);
    if (mode == ForwardMode::UnitVae) {
      // 2 * KL(q || N(0, I)) dropped-constants form
      Var kl = tape.sum(fused.var + v_square(fused.mu) - v_log(fused.var), {1});
      loss = loss + tape.mean(kl);
    }
    if (!all_finite(loss.val()))
      throw std::runtime_error("pretrain: non-finite warm-up loss");
    out.loss = loss;
    return out;
  }

  // DAG and joint tensor
  Var escore = edge_indicator(tape, xi, braw, beta);
  HardDag hd = hard_adjacency(s.dag);
  Var a = joint_tensor(tape, wl, cfg.arities, escore, hd.topo_order);
  Var a_flat = tape.reshape(a, {K});

  // batch-fresh responsibilities from the sampled z (no gradient)
  Tensor gamma({B, K});
  if (gamma_override) {
    gamma = *gamma_override;
  } else {
    JointTensor jt{a.val()};
    for (int b = 0; b < B; ++b) {
      Tensor zb({J});
      for (int j = 0; j < J; ++j) zb[j] = out.z.at({b, j});
      Responsibilities r = responsibilities(zb, s.gmm, jt);
      for (int k = 0; k < K; ++k) gamma.at({b, k}) = r.gamma.data[static_cast<size_t>(k)];
    }
  }
  out.gamma = gamma;

  Var mt = tape.track(Tensor(s.gmm.means).reshaped({K, J}));
  Var vt = tape.track(Tensor(s.gmm.vars).reshaped({K, J}));
  out.terms = elbo_terms(tape, xb, recon, fused, mt, vt, a_flat, gamma);
  out.loss = dataset_loss(tape, out.terms, &braw, cfg.lambda_b);
  return out;
}

// collects clipped gradients in param_refs order
std::vector<Tensor> gather_grads(Tape& tape, const std::vector<Var>& leaves,
                                 double clip) {
  std::vector<Tensor> gs;
  gs.reserve(leaves.size());
  double norm2 = 0.0;
  for (const Var& v : leaves) {
    const Tensor& g = tape.grad(v);
    for (double x : g.data) norm2 += x * x;
    gs.push_back(g);
  }
  double norm = std::sqrt(norm2);
  if (clip > 0.0 && norm > clip) {
    double scale = clip / norm;
    for (Tensor& g : gs)
      for (double& x : g.data) x *= scale;
  }
  return gs;
}

void apply_step(TrainState& s, const TrainConfig& cfg,
                const std::vector<ParamRef>& refs,
                const std::vector<Tensor>& grads, bool a_group_only) {
  if (s.opt.m.empty()) {
    for (const ParamRef& r : refs) {
      s.opt.m.push_back(Tensor::zeros(r.t->shape));
      s.opt.v.push_back(Tensor::zeros(r.t->shape));
    }
  }
  ++s.opt.t;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(s.opt.t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(s.opt.t));
  for (size_t i = 0; i < refs.size(); ++i) {
    if (a_group_only && !refs[i].a_group) continue;
    Tensor& p = *refs[i].t;
    const Tensor& g = grads[i];
    if (cfg.plain_sgd) {
      for (size_t j = 0; j < p.data.size(); ++j) p.data[j] -= cfg.lr * g.data[j];
      continue;
    }
    Tensor& m = s.opt.m[i];
    Tensor& v = s.opt.v[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      m.data[j] = b1 * m.data[j] + (1.0 - b1) * g.data[j];
      v.data[j] = b2 * v.data[j] + (1.0 - b2) * g.data[j] * g.data[j];
      p.data[j] -= cfg.lr * (m.data[j] / c1) / (std::sqrt(v.data[j] / c2) + eps);
    }
  }
}

Tensor normal_tensor(const Shape& s, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.data) v = nd(rng);
  return t;
}

std::vector<Tensor> slice_batch(const Dataset& data, int start, int len) {
  std::vector<Tensor> xb;
  for (const Tensor& m : data.modalities) xb.push_back(rows(m, start, len));
  return xb;
}

}  // namespace

TrainState init_state(const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  TrainState s;
  s.rng.seed(cfg.seed);
  int M = data.num_modalities();
  auto kinds = decoder_kinds_of(cfg, M);
  int K = cfg.num_clusters();
  for (int m = 0; m < M; ++m) {
    int dim = data.modalities[static_cast<size_t>(m)].shape[1];
    s.encoders.push_back(Mlp::init(encoder_spec(dim, cfg), s.rng));
    if (kinds[static_cast<size_t>(m)] == DecoderKind::Neural) {
      s.decoders.push_back(Mlp::init(decoder_spec(dim, cfg), s.rng));
      s.experts.emplace_back();
    } else {
      if (dim < 2)
        throw std::invalid_argument("init_state: expert modality needs dim >= 2");
      s.decoders.push_back(Mlp{});  // placeholder, never used
      std::vector<ExpertCurveRaw> raws;
      for (int k = 0; k < K; ++k) raws.push_back(ExpertCurveRaw::init(s.rng));
      s.experts.push_back(std::move(raws));
    }
  }
  int L = static_cast<int>(cfg.arities.size());
  s.dag = DagParams::init(L, s.rng, cfg.beta.beta_init);
  s.tables = CausalTables::init(cfg.arities, s.rng);
  s.gmm = LatentGmm::init(cfg.arities, cfg.latent_dim, s.rng);
  return s;
}

std::vector<ParamRef> param_refs(TrainState& s) {
  std::vector<ParamRef> refs;
  for (Mlp& e : s.encoders)
    for (Tensor& p : e.params) refs.push_back({&p, false});
  for (size_t m = 0; m < s.decoders.size(); ++m) {
    if (s.experts[m].empty()) {
      for (Tensor& p : s.decoders[m].params) refs.push_back({&p, false});
    } else {
      for (ExpertCurveRaw& raw : s.experts[m]) {
        refs.push_back({&raw.raw_breakpoint, false});
        refs.push_back({&raw.slope1, false});
        refs.push_back({&raw.slope2, false});
        refs.push_back({&raw.intercept, false});
        refs.push_back({&raw.log_var, false});
      }
    }
  }
  refs.push_back({&s.dag.xi, true});
  refs.push_back({&s.dag.b_raw, true});
  for (Tensor& w : s.tables.w_logits) refs.push_back({&w, true});
  return refs;
}

Tensor fused_means(const TrainState& s, const Dataset& data,
                   const TrainConfig& cfg) {
  int N = data.n(), J = cfg.latent_dim;
  Tensor out({N, J});
  Tape tape;
  std::vector<GaussianVar> experts_q;
  for (size_t m = 0; m < data.modalities.size(); ++m)
    experts_q.push_back(encode(tape, s.encoders[m].spec,
                               track_params(tape, s.encoders[m].params),
                               tape.constant(data.modalities[m]), J));
  GaussianVar fused = fuse_poe(tape, experts_q);
  out = fused.mu.val();
  return out;
}

std::vector<Responsibilities> dataset_responsibilities(const TrainState& s,
                                                       const Dataset& data,
                                                       const TrainConfig& cfg) {
  Tensor mu = fused_means(s, data, cfg);
  HardDag hd = hard_adjacency(s.dag);
  JointTensor a = joint_tensor_value(s.tables, edge_indicator_value(s.dag),
                                     hd.topo_order);
  int N = data.n(), J = cfg.latent_dim;
  std::vector<Responsibilities> out;
  out.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    Tensor z({J});
    for (int j = 0; j < J; ++j) z[j] = mu.at({i, j});
    out.push_back(responsibilities(z, s.gmm, a));
  }
  return out;
}

namespace {

// responsibility / block-update alternation on fixed embeddings until hard
// assignments stop
// moving (or the iteration cap).
void fit_gmm_on_embeddings(TrainState& s, const Dataset& data,
                           const TrainConfig& cfg, int max_iters = 100) {
  int N = data.n(), J = cfg.latent_dim, K = cfg.num_clusters();
  Tensor mu = fused_means(s, data, cfg);

  // seed cluster means with distinct data embeddings
  std::vector<int> pick(static_cast<size_t>(N));
  std::iota(pick.begin(), pick.end(), 0);
  std::shuffle(pick.begin(), pick.end(), s.rng);
  std::normal_distribution<double> jitter(0.0, 0.01);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < J; ++j)
      s.gmm.means.data[static_cast<size_t>(k * J + j)] =
          mu.at({pick[static_cast<size_t>(k % N)], j}) + (k >= N ? jitter(s.rng) : 0.0);
  for (double& v : s.gmm.vars.data) v = 1.0;

  std::vector<Tensor> mus, vars;
  for (int i = 0; i < N; ++i) {
    Tensor m({J});
    for (int j = 0; j < J; ++j) m[j] = mu.at({i, j});
    mus.push_back(std::move(m));
    vars.push_back(Tensor::full({J}, kVarFloor));
  }

  std::vector<int> prev_labels(static_cast<size_t>(N), -1);
  for (int it = 0; it < max_iters; ++it) {
    std::vector<Responsibilities> gs = dataset_responsibilities(s, data, cfg);
    std::vector<int> labels(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
      const auto& g = gs[static_cast<size_t>(i)].gamma.data;
      labels[static_cast<size_t>(i)] =
          static_cast<int>(std::max_element(g.begin(), g.end()) - g.begin());
    }
    s.gmm = block_update(s.gmm, mus, vars, gs);
    if (labels == prev_labels) break;
    prev_labels = labels;
  }
}

}  // namespace

void pretrain(TrainState& s, const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  int N = data.n();
  ForwardMode mode = cfg.pretrain_mode == PretrainMode::UnitVae
                         ? ForwardMode::UnitVae
                         : ForwardMode::Recon;
  if (cfg.pretrain_mode != PretrainMode::None) {
    std::vector<ParamRef> refs = param_refs(s);
    for (int e = 0; e < cfg.pretrain_epochs; ++e) {
      for (int start = 0; start < N; start += cfg.batch_size) {
        int len = std::min(cfg.batch_size, N - start);
        std::vector<Tensor> xb = slice_batch(data, start, len);
        Tensor eps = normal_tensor({len, cfg.latent_dim}, s.rng);
        Tape tape;
        ForwardOut f = batch_forward(tape, s, cfg, xb, cfg.beta.beta_init,
                                     mode, eps);
        tape.backward(f.loss);
        std::vector<Tensor> grads = gather_grads(tape, f.leaves, cfg.grad_clip);
        apply_step(s, cfg, refs, grads, false);
      }
    }
    // the warm-up moments should not leak into the main run
    s.opt = AdamState{};
  }
  fit_gmm_on_embeddings(s, data, cfg);
}

EpochRecord train_epoch(TrainState& s, const Dataset& data,
                        const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  int N = data.n(), J = cfg.latent_dim;
  std::vector<ParamRef> refs = param_refs(s);
  std::normal_distribution<double> xi_noise(0.0, cfg.xi_noise_std);

  double loss_sum = 0.0;
  int batches = 0;
  ElboBreakdown acc;
  int last_start = 0, last_len = 0;
  for (int start = 0; start < N; start += cfg.batch_size) {
    int len = std::min(cfg.batch_size, N - start);
    last_start = start;
    last_len = len;
    std::vector<Tensor> xb = slice_batch(data, start, len);
    Tensor eps = normal_tensor({len, J}, s.rng);
    double beta = cfg.beta.at(s.step);
    s.dag.beta = beta;
    Tape tape;
    ForwardOut f;
    try {
      f = batch_forward(tape, s, cfg, xb, beta, ForwardMode::Full, eps);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(e.what()) +
                               " (epoch " + std::to_string(s.epoch) +
                               ", parameter norm " +
                               std::to_string(param_norm(refs)) + ")");
    }
    tape.backward(f.loss);
    std::vector<Tensor> grads = gather_grads(tape, f.leaves, cfg.grad_clip);
    apply_step(s, cfg, refs, grads, false);
    if (cfg.xi_noise_every > 0 && cfg.xi_noise_std > 0.0 &&
        (s.step + 1) % cfg.xi_noise_every == 0)
      for (double& x : s.dag.xi.data) x += xi_noise(s.rng);
    ++s.step;
    loss_sum += f.loss.val()[0];
    ElboBreakdown b = elbo_breakdown(f.terms);
    acc.recon += b.recon;
    acc.entropy += b.entropy;
    acc.clustering += b.clustering;
    acc.total += b.total;
    if (acc.recon_per_modality.empty())
      acc.recon_per_modality.assign(b.recon_per_modality.size(), 0.0);
    for (size_t m = 0; m < b.recon_per_modality.size(); ++m)
      acc.recon_per_modality[m] += b.recon_per_modality[m];
    ++batches;
  }

  // per-epoch GMM rounds: responsibilities over the dataset, block update,
  // then extra gradient steps on the joint-tensor parameters
  Tensor mu = fused_means(s, data, cfg);
  std::vector<Tensor> mus, vars;
  for (int i = 0; i < N; ++i) {
    Tensor m({J});
    for (int j = 0; j < J; ++j) m[j] = mu.at({i, j});
    mus.push_back(std::move(m));
    vars.push_back(Tensor::full({J}, kVarFloor));
  }
  std::vector<Responsibilities> gs;
  for (int round = 0; round < cfg.gmm_iters; ++round) {
    gs = dataset_responsibilities(s, data, cfg);
    s.gmm = block_update(s.gmm, mus, vars, gs);
    for (int extra = 0; extra < cfg.extra_a_steps; ++extra) {
      std::vector<Tensor> xb = slice_batch(data, last_start, last_len);
      Tensor eps = normal_tensor({last_len, J}, s.rng);
      Tape tape;
      ForwardOut f = batch_forward(tape, s, cfg, xb, cfg.beta.at(s.step),
                                   ForwardMode::Full, eps);
      tape.backward(f.loss);
      std::vector<Tensor> grads = gather_grads(tape, f.leaves, cfg.grad_clip);
      apply_step(s, cfg, refs, grads, true);
    }
  }
  if (gs.empty()) gs = dataset_responsibilities(s, data, cfg);

  EpochRecord rec;
  rec.epoch = s.epoch;
  rec.loss = loss_sum / std::max(1, batches);
  rec.beta = s.dag.beta;
  rec.elbo.recon = acc.recon / batches;
  rec.elbo.entropy = acc.entropy / batches;
  rec.elbo.clustering = acc.clustering / batches;
  rec.elbo.total = acc.total / batches;
  for (double v : acc.recon_per_modality)
    rec.elbo.recon_per_modality.push_back(v / batches);
  HardDag hd = hard_adjacency(s.dag);
  if (!is_acyclic(hd.adjacency))
    throw std::runtime_error("train_epoch: extracted DAG is cyclic");
  rec.hard_adjacency = hd.adjacency;
  rec.topo_order = hd.topo_order;
  rec.occupancy.assign(static_cast<size_t>(cfg.num_clusters()), 0);
  for (const Responsibilities& r : gs) {
    const auto& g = r.gamma.data;
    ++rec.occupancy[static_cast<size_t>(
        std::max_element(g.begin(), g.end()) - g.begin())];
  }
  ++s.epoch;
  return rec;
}

FitResult fit(TrainState& s, const Dataset& data, const TrainConfig& cfg) {
  if (s.epoch == 0) pretrain(s, data, cfg);
  FitResult res;
  for (int e = s.epoch; e < cfg.epochs; ++e)
    res.history.push_back(train_epoch(s, data, cfg));
  return res;
}

double evaluate_batch(TrainState& s, const Dataset& data,
                      const TrainConfig& cfg, int start, int len,
                      const Tensor& eps, std::vector<Tensor>* grads,
                      const Tensor* gamma_override, Tensor* gamma_out) {
  std::vector<Tensor> xb = slice_batch(data, start, len);
  Tape tape;
  ForwardOut f = batch_forward(tape, s, cfg, xb, cfg.beta.at(s.step),
                               ForwardMode::Full, eps, gamma_override);
  if (grads) {
    tape.backward(f.loss);
    *grads = gather_grads(tape, f.leaves, 0.0);
  }
  if (gamma_out) *gamma_out = f.gamma;
  return f.loss.val()[0];
}

namespace {

void put_tensor(std::ostream& f, const Tensor& t) {
  int64_t nd = t.ndim();
  f.write(reinterpret_cast<const char*>(&nd), 8);
  for (int d : t.shape) {
    int64_t v = d;
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor get_tensor(std::istream& f) {
  int64_t nd = 0;
  f.read(reinterpret_cast<char*>(&nd), 8);
  if (!f || nd < 0 || nd > 8) throw std::runtime_error("checkpoint: bad tensor rank");
  Shape s;
  for (int64_t i = 0; i < nd; ++i) {
    int64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    s.push_back(static_cast<int>(v));
  }
  Tensor t(s);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: truncated tensor");
  return t;
}

}  // namespace

void save_checkpoint(const TrainState& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  std::ostringstream rngs;
  rngs << s.rng;
  nlohmann::json meta;
  meta["epoch"] = s.epoch;
  meta["step"] = s.step;
  meta["adam_t"] = s.opt.t;
  meta["rng"] = rngs.str();
  meta["beta"] = s.dag.beta;
  meta["num_adam"] = s.opt.m.size();
  std::string mj = meta.dump();
  f.write("CPCKPT01", 8);
  int64_t mlen = static_cast<int64_t>(mj.size());
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mj.data(), mlen);

  // tensors in param_refs order, then the GMM, then Adam moments
  std::vector<ParamRef> refs = param_refs(const_cast<TrainState&>(s));

  int64_t ntens = static_cast<int64_t>(refs.size());
  f.write(reinterpret_cast<const char*>(&ntens), 8);
  for (const ParamRef& r : refs) put_tensor(f, *r.t);
  put_tensor(f, s.gmm.means);
  put_tensor(f, s.gmm.vars);
  for (const Tensor& t : s.opt.m) put_tensor(f, t);
  for (const Tensor& t : s.opt.v) put_tensor(f, t);
  if (!f) throw std::runtime_error("save_checkpoint: short write");
}

TrainState load_checkpoint(const std::string& path, const Dataset& data,
                           const TrainConfig& cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "CPCKPT01")
    throw std::runtime_error("load_checkpoint: bad magic");
  int64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mj(static_cast<size_t>(mlen), '\0');
  f.read(mj.data(), mlen);
  nlohmann::json meta = nlohmann::json::parse(mj);

  TrainState s = init_state(data, cfg);  // shapes, then overwrite contents
  s.epoch = meta.at("epoch");
  s.step = meta.at("step");
  s.opt.t = meta.at("adam_t");
  s.dag.beta = meta.at("beta");
  std::istringstream rngs(meta.at("rng").get<std::string>());
  rngs >> s.rng;

  int64_t ntens = 0;
  f.read(reinterpret_cast<char*>(&ntens), 8);
  std::vector<ParamRef> refs = param_refs(s);
  if (ntens != static_cast<int64_t>(refs.size()))
    throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (ParamRef& r : refs) {
    Tensor t = get_tensor(f);
    if (t.shape != r.t->shape)
      throw std::runtime_error("load_checkpoint: tensor shape mismatch");
    *r.t = std::move(t);
  }
  s.gmm.means = get_tensor(f);
  s.gmm.vars = get_tensor(f);
  size_t nadam = meta.at("num_adam");
  s.opt.m.clear();
  s.opt.v.clear();
  for (size_t i = 0; i < nadam; ++i) s.opt.m.push_back(get_tensor(f));
  for (size_t i = 0; i < nadam; ++i) s.opt.v.push_back(get_tensor(f));
  return s;
}

}  // namespace cpima
