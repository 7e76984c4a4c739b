#include "cpima/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "cpima/datagen.hpp"
#include "cpima/report.hpp"
#include "cpima/trainer.hpp"
#include "json.hpp"

namespace cpima {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool quiet_logs() {
  const char* v = std::getenv("CPIMA_LOG");
  return v != nullptr && std::string(v) == "quiet";
}

std::string fnv1a_hex(const char* data, size_t len) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string hash_string(const std::string& s) {
  return fnv1a_hex(s.data(), s.size());
}

std::string hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for hashing: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  std::string bytes = os.str();
  return fnv1a_hex(bytes.data(), bytes.size());
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

// Classify exceptions into the exit-code contract: config/usage problems are
// 2, numerical faults during computation are 3.
template <typename Fn>
int guarded(const char* cmd, Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << cmd << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << cmd << ": " << e.what() << "\n";
    return kExitNumerical;
  }
}

uint64_t pick_seed(const json& block, int64_t seed_override) {
  if (seed_override >= 0) return static_cast<uint64_t>(seed_override);
  return block.value("seed", 0ull);
}

TrainConfig parse_train_config(const json& root, int n, int64_t seed_override) {
  if (!root.contains("train"))
    throw std::invalid_argument("config: missing \"train\" block");
  const json& t = root.at("train");
  TrainConfig cfg;
  cfg.lr = t.value("lr", cfg.lr);
  cfg.epochs = t.value("epochs", cfg.epochs);
  cfg.batch_size = t.value("batch_size", cfg.batch_size);
  cfg.latent_dim = t.value("latent_dim", cfg.latent_dim);
  if (t.contains("arities"))
    cfg.arities = t.at("arities").get<std::vector<int>>();
  cfg.xi_noise_std = t.value("xi_noise_std", cfg.xi_noise_std);
  cfg.xi_noise_every = t.value("xi_noise_every", cfg.xi_noise_every);
  cfg.extra_a_steps = t.value("extra_a_steps", cfg.extra_a_steps);
  cfg.gmm_iters = t.value("gmm_iters", cfg.gmm_iters);
  cfg.pretrain_epochs = t.value("pretrain_epochs", cfg.pretrain_epochs);
  cfg.lambda_b = t.value("lambda_b", cfg.lambda_b);
  cfg.plain_sgd = t.value("plain_sgd", cfg.plain_sgd);
  cfg.grad_clip = t.value("grad_clip", cfg.grad_clip);
  if (t.contains("enc_hidden"))
    cfg.enc_hidden = t.at("enc_hidden").get<std::vector<int>>();
  if (t.contains("dec_hidden"))
    cfg.dec_hidden = t.at("dec_hidden").get<std::vector<int>>();
  cfg.seed = pick_seed(t, seed_override);

  std::string pm = t.value("pretrain", std::string("reconstruction"));
  if (pm == "none")
    cfg.pretrain_mode = PretrainMode::None;
  else if (pm == "reconstruction")
    cfg.pretrain_mode = PretrainMode::Reconstruction;
  else if (pm == "unit_vae")
    cfg.pretrain_mode = PretrainMode::UnitVae;
  else
    throw std::invalid_argument("config: unknown pretrain mode \"" + pm + "\"");

  if (t.contains("decoders")) {
    for (const auto& d : t.at("decoders")) {
      std::string name = d.get<std::string>();
      if (name == "neural")
        cfg.decoder_kinds.push_back(DecoderKind::Neural);
      else if (name == "expert_curve")
        cfg.decoder_kinds.push_back(DecoderKind::ExpertCurve);
      else
        throw std::invalid_argument("config: unknown decoder \"" + name + "\"");
    }
  }

  int batches = std::max(1, (n + cfg.batch_size - 1) / cfg.batch_size);
  cfg.beta.beta_init = 1.0;
  cfg.beta.beta_final = 0.05;
  cfg.beta.update_every = std::max(1, batches);
  cfg.beta.total_steps = std::max(1, cfg.epochs * batches);
  if (t.contains("beta")) {
    const json& b = t.at("beta");
    cfg.beta.beta_init = b.value("init", cfg.beta.beta_init);
    cfg.beta.beta_final = b.value("final", cfg.beta.beta_final);
    cfg.beta.update_every = b.value("update_every", cfg.beta.update_every);
    cfg.beta.total_steps = b.value("total_steps", cfg.beta.total_steps);
  }
  cfg.validate();
  return cfg;
}

// Loads the on-disk dataset into per-modality [N, D] matrices.
Dataset load_dataset(const std::string& dir, std::string* kind_out) {
  json meta = read_json_file(dir + "/meta.json");
  std::string kind = meta.at("kind");
  if (kind_out) *kind_out = kind;
  Dataset data;
  if (kind == "circles") {
    CircleDataset ds = load_circles(dir);
    int n = static_cast<int>(ds.images.size());
    int d = ds.height * ds.width * 3;
    Tensor flat({n, d});
    for (int i = 0; i < n; ++i)
      std::copy(ds.images[static_cast<size_t>(i)].data.begin(),
                ds.images[static_cast<size_t>(i)].data.end(),
                flat.data.begin() + static_cast<long>(i) * d);
    data.modalities.push_back(std::move(flat));
  } else if (kind == "curves") {
    std::vector<CurveSample> ds = load_curves(dir);
    int n = static_cast<int>(ds.size());
    int g = ds[0].curve.shape[0];
    Tensor curves({n, g}), images({n, 16});
    for (int i = 0; i < n; ++i) {
      std::copy(ds[static_cast<size_t>(i)].curve.data.begin(),
                ds[static_cast<size_t>(i)].curve.data.end(),
                curves.data.begin() + static_cast<long>(i) * g);
      std::copy(ds[static_cast<size_t>(i)].image.data.begin(),
                ds[static_cast<size_t>(i)].image.data.end(),
                images.data.begin() + static_cast<long>(i) * 16);
    }
    data.modalities.push_back(std::move(curves));
    data.modalities.push_back(std::move(images));
  } else {
    throw std::invalid_argument("unknown dataset kind \"" + kind + "\"");
  }
  data.validate();
  return data;
}

std::string gamma_csv(const std::vector<Responsibilities>& gammas) {
  std::ostringstream os;
  int k = static_cast<int>(gammas.front().gamma.data.size());
  os << "index";
  for (int c = 0; c < k; ++c) os << ",g" << c;
  os << "\n";
  for (size_t i = 0; i < gammas.size(); ++i) {
    os << i;
    for (double g : gammas[i].gamma.data) os << "," << g;
    os << "\n";
  }
  return os.str();
}

std::string latent_csv(const Tensor& z, const std::vector<int>& clusters) {
  std::ostringstream os;
  int n = z.shape[0], j = z.shape[1];
  os << "index";
  for (int d = 0; d < j; ++d) os << ",z" << d;
  os << ",cluster\n";
  for (int i = 0; i < n; ++i) {
    os << i;
    for (int d = 0; d < j; ++d) os << "," << z.data[static_cast<size_t>(i * j + d)];
    os << "," << clusters[static_cast<size_t>(i)] << "\n";
  }
  return os.str();
}

// Cluster-archetype export: each cluster mean pushed through the decoders.
void write_decoded_means(const TrainState& s, const TrainConfig& cfg,
                         const Dataset& data, const std::string& out_dir) {
  int k = s.gmm.num_clusters();
  int j = cfg.latent_dim;
  Tensor zk({k, j});
  for (int c = 0; c < k; ++c) {
    GaussianDiag comp = s.gmm.component(c);
    for (int d = 0; d < j; ++d)
      zk.data[static_cast<size_t>(c * j + d)] = comp.mean.data[static_cast<size_t>(d)];
  }
  for (int m = 0; m < data.num_modalities(); ++m) {
    std::ostringstream os;
    if (s.experts[static_cast<size_t>(m)].empty()) {
      Tape tape;
      std::vector<Var> ps = track_params(tape, s.decoders[static_cast<size_t>(m)].params);
      Var zv = tape.constant(zk);
      GaussianVar out = decode_neural(tape, s.decoders[static_cast<size_t>(m)].spec,
                                      ps, zv, data.modalities[static_cast<size_t>(m)].shape[1]);
      const Tensor& mu = out.mu.val();
      int d = mu.shape[1];
      os << "cluster";
      for (int c = 0; c < d; ++c) os << ",x" << c;
      os << "\n";
      for (int c = 0; c < k; ++c) {
        os << c;
        for (int q = 0; q < d; ++q)
          os << "," << mu.data[static_cast<size_t>(c * d + q)];
        os << "\n";
      }
      write_text(out_dir + "/decoded_means_m" + std::to_string(m) + ".csv",
                 os.str());
    } else {
      os << "cluster,breakpoint,slope1,slope2,intercept\n";
      for (int c = 0; c < k; ++c) {
        ExpertCurveParams p =
            expert_curve_value(s.experts[static_cast<size_t>(m)][static_cast<size_t>(c)]);
        os << c << "," << p.breakpoint << "," << p.slope1 << "," << p.slope2
           << "," << p.intercept << "\n";
      }
      write_text(out_dir + "/expert_params_m" + std::to_string(m) + ".csv",
                 os.str());
    }
  }
}

void write_run_artifacts(TrainState& s, const Dataset& data,
                         const TrainConfig& cfg, const std::string& out_dir,
                         std::vector<std::string>& outputs) {
  std::vector<Responsibilities> gammas = dataset_responsibilities(s, data, cfg);
  Tensor z = fused_means(s, data, cfg);
  HardDag dag = hard_adjacency(s.dag);

  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out_dir + "/" + name, text);
    outputs.push_back(name);
  };
  emit("adjacency.csv", adjacency_to_csv(dag.adjacency));
  emit("gmm.csv", gmm_to_csv(s.gmm));
  emit("gamma.csv", gamma_csv(gammas));
  emit("cluster_labels.csv", labels_to_csv(gammas));
  emit("latent.csv", latent_csv(z, cluster_labels(gammas)));
  emit("dag_final.dot", dag_to_dot(dag, edge_indicator_value(s.dag)));
  for (int l = 0; l < s.tables.num_nodes(); ++l)
    emit("conditional_node" + std::to_string(l) + ".csv",
         conditional_table_csv(s.tables, dag, l));
  write_decoded_means(s, cfg, data, out_dir);
  for (int m = 0; m < data.num_modalities(); ++m)
    outputs.push_back(s.experts[static_cast<size_t>(m)].empty()
                          ? "decoded_means_m" + std::to_string(m) + ".csv"
                          : "expert_params_m" + std::to_string(m) + ".csv");
  save_checkpoint(s, out_dir + "/checkpoint.bin");
  outputs.push_back("checkpoint.bin");
}

void run_generate(const CliOptions& opt) {
  if (opt.config_path.empty() || opt.out_dir.empty())
    throw std::invalid_argument("generate needs --config and --out");
  json root = read_json_file(opt.config_path);
  if (!root.contains("dataset"))
    throw std::invalid_argument("config: missing \"dataset\" block");
  const json& d = root.at("dataset");
  std::string kind = d.value("kind", std::string());
  int n = d.value("n", 0);
  if (n <= 0) throw std::invalid_argument("config: dataset n must be positive");
  uint64_t seed = pick_seed(d, opt.seed_override);
  std::mt19937_64 rng(seed);

  fs::create_directories(opt.out_dir);
  json manifest;
  if (kind == "circles") {
    int h = d.value("height", 16), w = d.value("width", 16);
    CircleDataset ds = generate_circles(n, h, w, rng);
    save_circles(ds, opt.out_dir);
    manifest["rejections"] = ds.rejections;
    manifest["fingerprint"] = hash_file(opt.out_dir + "/images.bin");
    manifest["outputs"] = {"images.bin", "labels.csv", "meta.json"};
  } else if (kind == "curves") {
    int g = d.value("grid_len", 100);
    double noise = d.value("noise_std", 0.02);
    std::vector<CurveSample> ds = generate_curves(n, g, rng, noise);
    save_curves(ds, opt.out_dir);
    manifest["fingerprint"] = hash_file(opt.out_dir + "/curves.bin");
    manifest["outputs"] = {"curves.bin", "images.bin", "labels.csv",
                           "meta.json"};
  } else {
    throw std::invalid_argument("config: unknown dataset kind \"" + kind +
                                "\"");
  }
  manifest["command"] = "generate";
  manifest["kind"] = kind;
  manifest["n"] = n;
  manifest["seed"] = seed;
  manifest["config_hash"] = hash_string(root.dump());
  write_text(opt.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  if (!quiet_logs())
    std::cout << "generated " << n << " " << kind << " samples in "
              << opt.out_dir << "\n";
}

void run_train(const CliOptions& opt) {
  if (opt.config_path.empty() || opt.data_dir.empty() || opt.out_dir.empty())
    throw std::invalid_argument("train needs --config, --data and --out");
  auto t0 = std::chrono::steady_clock::now();
  json root = read_json_file(opt.config_path);

  std::string kind;
  Dataset data = load_dataset(opt.data_dir, &kind);
  TrainConfig cfg = parse_train_config(root, data.n(), opt.seed_override);
  if (root.contains("dataset")) {
    std::string want = root.at("dataset").value("kind", kind);
    if (want != kind)
      throw std::invalid_argument("dataset kind on disk (" + kind +
                                  ") does not match config (" + want + ")");
  }

  fs::create_directories(opt.out_dir);
  TrainState s;
  bool resumed = !opt.resume_path.empty();
  if (resumed)
    s = load_checkpoint(opt.resume_path, data, cfg);
  else
    s = init_state(data, cfg);

  std::ofstream metrics(opt.out_dir + "/metrics.jsonl",
                        resumed ? std::ios::app : std::ios::trunc);
  if (!metrics)
    throw std::runtime_error("cannot write metrics.jsonl in " + opt.out_dir);

  std::vector<std::string> outputs = {"manifest.json"};
  if (s.epoch == 0) pretrain(s, data, cfg);
  json final_metrics;
  for (int e = s.epoch; e < cfg.epochs; ++e) {
    EpochRecord rec = train_epoch(s, data, cfg);
    std::string line =
        breakdown_json_line(rec.elbo, rec.epoch, rec.beta, rec.loss);
    if (outputs.size() == 1) outputs.push_back("metrics.jsonl");
    metrics << line << "\n";
    metrics.flush();
    char name[32];
    std::snprintf(name, sizeof(name), "dag_epoch_%04d.dot", rec.epoch);
    write_text(opt.out_dir + "/" + std::string(name),
               dag_to_dot(hard_adjacency(s.dag), edge_indicator_value(s.dag)));
    outputs.push_back(name);
    if (!quiet_logs())
      std::cout << line << "\n";
    final_metrics = json::parse(line);
  }
  write_run_artifacts(s, data, cfg, opt.out_dir, outputs);

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  json manifest;
  manifest["command"] = "train";
  manifest["config_hash"] = hash_string(root.dump());
  manifest["seed"] = cfg.seed;
  manifest["kind"] = kind;
  manifest["n"] = data.n();
  manifest["arities"] = cfg.arities;
  manifest["latent_dim"] = cfg.latent_dim;
  manifest["data_dir"] = fs::absolute(opt.data_dir).string();
  manifest["dataset_fingerprint"] =
      hash_file(opt.data_dir + (kind == "curves" ? "/curves.bin" : "/images.bin"));
  manifest["epochs_run"] = s.epoch;
  manifest["wall_seconds"] = secs;
  manifest["final"] = final_metrics;
  manifest["outputs"] = outputs;
  write_text(opt.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  for (const std::string& name : outputs) {
    fs::path p = fs::path(opt.out_dir) / name;
    if (!fs::exists(p) || fs::file_size(p) == 0)
      throw std::runtime_error("missing or empty output " + name);
  }
}

std::vector<Responsibilities> read_gamma_csv(const std::string& path,
                                             const std::vector<int>& arities) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("missing " + path);
  Shape grid(arities.begin(), arities.end());
  std::vector<Responsibilities> out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');  // index
    Responsibilities r{Tensor(grid)};
    for (double& g : r.gamma.data) {
      if (!std::getline(ls, cell, ','))
        throw std::invalid_argument("gamma.csv: short row");
      g = std::stod(cell);
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw std::invalid_argument("gamma.csv: no rows");
  return out;
}

// Columns of the dataset's labels.csv that act as discrete generative
// factors, with their value counts.
struct FactorTable {
  std::vector<std::string> names;
  std::vector<std::vector<int>> values;  // per factor, per point
  std::vector<int> cardinality;
};

FactorTable read_factors(const std::string& data_dir, const std::string& kind) {
  std::ifstream f(data_dir + "/labels.csv");
  if (!f) throw std::invalid_argument("missing labels.csv in " + data_dir);
  FactorTable t;
  if (kind == "circles")
    t.names = {"hue", "radius_branch", "shift_branch"};
  else
    t.names = {"type"};
  t.values.resize(t.names.size());
  std::string line;
  std::getline(f, line);  // header; factor columns come right after index
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    for (auto& col : t.values) {
      if (!std::getline(ls, cell, ','))
        throw std::invalid_argument("labels.csv: short row");
      col.push_back(std::stoi(cell));
    }
  }
  for (const auto& col : t.values) {
    int hi = 0;
    for (int v : col) hi = std::max(hi, v + 1);
    t.cardinality.push_back(std::max(hi, 2));
  }
  return t;
}

void run_report(const CliOptions& opt) {
  if (opt.run_dir.empty()) throw std::invalid_argument("report needs a run dir");
  json manifest = read_json_file(opt.run_dir + "/manifest.json");
  std::vector<int> arities = manifest.at("arities").get<std::vector<int>>();
  std::string kind = manifest.at("kind");
  std::string data_dir = manifest.at("data_dir");

  std::vector<Responsibilities> gammas =
      read_gamma_csv(opt.run_dir + "/gamma.csv", arities);
  FactorTable factors = read_factors(data_dir, kind);
  if (!factors.values.empty() &&
      factors.values.front().size() != gammas.size())
    throw std::invalid_argument("report: gamma.csv and labels.csv disagree on n");

  int num_nodes = static_cast<int>(arities.size());
  int num_factors = static_cast<int>(factors.names.size());
  std::vector<int> clusters = cluster_labels(gammas);
  int num_clusters = 1;
  for (int c : arities) num_clusters *= c;

  json rep;
  rep["run_dir"] = opt.run_dir;
  rep["kind"] = kind;
  std::ostringstream text;
  text << "run: " << opt.run_dir << " (" << kind << ", n=" << gammas.size()
       << ")\n";

  std::vector<std::vector<double>> purity_matrix(
      static_cast<size_t>(num_nodes));
  json per_node = json::array();
  for (int l = 0; l < num_nodes; ++l) {
    std::vector<int> labels = node_labels(gammas, l);
    json node;
    node["node"] = l;
    for (int fct = 0; fct < num_factors; ++fct) {
      Tensor counts = contingency(labels, arities[static_cast<size_t>(l)],
                                  factors.values[static_cast<size_t>(fct)],
                                  factors.cardinality[static_cast<size_t>(fct)]);
      double p = purity(counts), m = nmi(counts);
      purity_matrix[static_cast<size_t>(l)].push_back(p);
      node[factors.names[static_cast<size_t>(fct)]] = {{"purity", p},
                                                       {"nmi", m}};
    }
    per_node.push_back(node);
  }
  rep["nodes"] = per_node;

  std::vector<int> match = match_nodes_to_factors(purity_matrix);
  json matching = json::object();
  for (int fct = 0; fct < num_factors; ++fct) {
    int node = match[static_cast<size_t>(fct)];
    const std::string& name = factors.names[static_cast<size_t>(fct)];
    matching[name] = node;
    text << "factor " << name << " -> node " << node;
    if (node >= 0) {
      double p = purity_matrix[static_cast<size_t>(node)][static_cast<size_t>(fct)];
      text << " (purity " << p << ")";
      std::vector<int> labels = node_labels(gammas, node);
      Tensor counts = contingency(labels, arities[static_cast<size_t>(node)],
                                  factors.values[static_cast<size_t>(fct)],
                                  factors.cardinality[static_cast<size_t>(fct)]);
      write_text(opt.run_dir + "/contingency_" + name + ".csv",
                 contingency_csv(counts, "node" + std::to_string(node), name));
    }
    text << "\n";
  }
  rep["matching"] = matching;

  // Cluster-level view: the full joint outcome against every factor.
  json per_cluster = json::object();
  for (int fct = 0; fct < num_factors; ++fct) {
    Tensor counts = contingency(clusters, num_clusters,
                                factors.values[static_cast<size_t>(fct)],
                                factors.cardinality[static_cast<size_t>(fct)]);
    per_cluster[factors.names[static_cast<size_t>(fct)]] = {
        {"purity", purity(counts)}, {"nmi", nmi(counts)}};
  }
  rep["clusters"] = per_cluster;

  std::ifstream adj(opt.run_dir + "/adjacency.csv");
  if (adj) {
    std::ostringstream os;
    os << adj.rdbuf();
    text << "hard DAG adjacency:\n" << os.str();
  }
  write_text(opt.run_dir + "/report.json", rep.dump(2) + "\n");
  std::cout << text.str();
  if (!quiet_logs()) std::cout << rep.dump(2) << "\n";
}

}  // namespace

int cmd_generate(const CliOptions& opt) {
  return guarded("generate", [&] { run_generate(opt); });
}

int cmd_train(const CliOptions& opt) {
  return guarded("train", [&] { run_train(opt); });
}

int cmd_report(const CliOptions& opt) {
  return guarded("report", [&] { run_report(opt); });
}

}  // namespace cpima
