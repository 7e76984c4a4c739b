#include "cpima/gmm.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cpima {

void GaussianDiag::validate(double floor) const {
  if (mean.shape != var.shape || mean.ndim() != 1)
    throw std::invalid_argument("GaussianDiag: mean/var must be equal-length vectors");
  for (double v : var.data)
    if (!(v >= floor)) throw std::invalid_argument("GaussianDiag: variance below floor");
}

int LatentGmm::num_clusters() const { return shape_size(Shape(arities.begin(), arities.end())); }

void LatentGmm::validate(double floor) const {
  Shape want(arities.begin(), arities.end());
  want.push_back(latent_dim);
  if (means.shape != want || vars.shape != want)
    throw std::invalid_argument("LatentGmm: shape mismatch with arities/latent_dim");
  for (double v : vars.data)
    if (!(v >= floor)) throw std::invalid_argument("LatentGmm: variance below floor");
}

GaussianDiag LatentGmm::component(int flat_cluster) const {
  GaussianDiag g;
  g.mean = Tensor({latent_dim});
  g.var = Tensor({latent_dim});
  for (int j = 0; j < latent_dim; ++j) {
    g.mean[j] = means.data[static_cast<size_t>(flat_cluster * latent_dim + j)];
    g.var[j] = vars.data[static_cast<size_t>(flat_cluster * latent_dim + j)];
  }
  return g;
}

LatentGmm LatentGmm::init(const std::vector<int>& arities, int latent_dim,
                          std::mt19937_64& rng, double mean_std, double init_var) {
  if (latent_dim <= 0) throw std::invalid_argument("LatentGmm::init: latent_dim must be positive");
  LatentGmm g;
  g.arities = arities;
  g.latent_dim = latent_dim;
  Shape s(arities.begin(), arities.end());
  s.push_back(latent_dim);
  g.means = Tensor(s);
  g.vars = Tensor::full(s, init_var);
  std::normal_distribution<double> nd(0.0, mean_std);
  for (double& m : g.means.data) m = nd(rng);
  g.validate();
  return g;
}

double log_density_diag(const Tensor& z, const GaussianDiag& g) {
  if (z.shape != g.mean.shape)
    throw std::invalid_argument("log_density_diag: dimension mismatch");
  double acc = 0.0;
  for (int j = 0; j < z.size(); ++j) {
    double d = z[j] - g.mean[j];
    acc += -0.5 * std::log(2.0 * std::numbers::pi * g.var[j]) - d * d / (2.0 * g.var[j]);
  }
  return acc;
}

Responsibilities responsibilities(const Tensor& z, const LatentGmm& gmm,
                                  const JointTensor& a) {
  gmm.validate();
  if (a.a.size() != gmm.num_clusters())
    throw std::invalid_argument("responsibilities: joint tensor / mixture size mismatch");
  int K = gmm.num_clusters();
  Tensor logp({K});
  for (int k = 0; k < K; ++k) {
    double la = a.a.data[static_cast<size_t>(k)] > 0.0
                    ? std::log(a.a.data[static_cast<size_t>(k)])
                    : -std::numeric_limits<double>::infinity();
    logp[k] = la + log_density_diag(z, gmm.component(k));
  }
  // normalize against the max so at least one entry survives exp()
  double m = *std::max_element(logp.data.begin(), logp.data.end());
  if (!std::isfinite(m))
    throw std::runtime_error("responsibilities: no cluster has positive prior mass");
  double total = 0.0;
  for (double& v : logp.data) {
    v = std::exp(v - m);
    total += v;
  }
  Responsibilities r;
  r.gamma = Tensor(Shape(gmm.arities.begin(), gmm.arities.end()));
  for (int k = 0; k < K; ++k) r.gamma.data[static_cast<size_t>(k)] = logp[k] / total;
  if (!all_finite(r.gamma))
    throw std::runtime_error("responsibilities: non-finite posterior");
  return r;
}

LatentGmm block_update(const LatentGmm& prev, const std::vector<Tensor>& mus,
                       const std::vector<Tensor>& vars,
                       const std::vector<Responsibilities>& gammas,
                       double floor) {
  size_t D = mus.size();
  if (D == 0) throw std::invalid_argument("block_update: empty batch");
  if (vars.size() != D || gammas.size() != D)
    throw std::invalid_argument("block_update: batch length mismatch");
  prev.validate(0.0);
  int K = prev.num_clusters(), J = prev.latent_dim;

  // pooled moments double as the reset variance for empty clusters
  Tensor pool_mean({J}), pool_var({J});
  for (const Tensor& mu : mus)
    for (int j = 0; j < J; ++j) pool_mean[j] += mu[j] / static_cast<double>(D);
  for (size_t d = 0; d < D; ++d)
    for (int j = 0; j < J; ++j) {
      double dm = mus[d][j] - pool_mean[j];
      pool_var[j] += (dm * dm + vars[d][j]) / static_cast<double>(D);
    }

  LatentGmm out = prev;
  std::vector<double> weight(static_cast<size_t>(K), 0.0);
  for (const auto& g : gammas) {
    if (g.gamma.size() != K)
      throw std::invalid_argument("block_update: gamma size mismatch");
    for (int k = 0; k < K; ++k) weight[static_cast<size_t>(k)] += g.gamma.data[static_cast<size_t>(k)];
  }

  for (int k = 0; k < K; ++k) {
    double w = weight[static_cast<size_t>(k)];
    if (w < 1e-8) {
      for (int j = 0; j < J; ++j)
        out.vars.data[static_cast<size_t>(k * J + j)] = std::max(pool_var[j], floor);
      continue;
    }
    for (int j = 0; j < J; ++j) {
      double num = 0.0;
      for (size_t d = 0; d < D; ++d)
        num += gammas[d].gamma.data[static_cast<size_t>(k)] * mus[d][j];
      out.means.data[static_cast<size_t>(k * J + j)] = num / w;
    }
    for (int j = 0; j < J; ++j) {
      double mt = out.means.data[static_cast<size_t>(k * J + j)];
      double num = 0.0;
      for (size_t d = 0; d < D; ++d) {
        double dm = mus[d][j] - mt;
        num += gammas[d].gamma.data[static_cast<size_t>(k)] * (dm * dm + vars[d][j]);
      }
      out.vars.data[static_cast<size_t>(k * J + j)] = std::max(num / w, floor);
    }
  }
  out.validate(floor);
  return out;
}

std::string gmm_to_csv(const LatentGmm& gmm) {
  std::ostringstream os;
  os << "cluster";
  for (size_t l = 0; l < gmm.arities.size(); ++l) os << ",n" << l;
  for (int j = 0; j < gmm.latent_dim; ++j) os << ",mean" << j;
  for (int j = 0; j < gmm.latent_dim; ++j) os << ",var" << j;
  os << "\n";
  Shape grid(gmm.arities.begin(), gmm.arities.end());
  for (int k = 0; k < gmm.num_clusters(); ++k) {
    os << k;
    for (int c : unflatten_index(grid, k)) os << "," << c;
    for (int j = 0; j < gmm.latent_dim; ++j)
      os << "," << gmm.means.data[static_cast<size_t>(k * gmm.latent_dim + j)];
    for (int j = 0; j < gmm.latent_dim; ++j)
      os << "," << gmm.vars.data[static_cast<size_t>(k * gmm.latent_dim + j)];
    os << "\n";
  }
  return os.str();
}

std::string labels_to_csv(const std::vector<Responsibilities>& gammas) {
  std::ostringstream os;
  os << "point,label,gamma_max\n";
  for (size_t d = 0; d < gammas.size(); ++d) {
    const auto& g = gammas[d].gamma.data;
    auto it = std::max_element(g.begin(), g.end());
    os << d << "," << (it - g.begin()) << "," << *it << "\n";
  }
  return os.str();
}

}  // namespace cpima
