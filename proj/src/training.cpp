#include "bayrel/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace bayrel {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kHalfLog2PiE = 1.4189385332046727417803297364056;
constexpr std::uint64_t kHoldoutStream = 11;
constexpr std::uint64_t kEpochStream = 12;

double softplus_stable(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double clip_prob(double p) {
  return std::min(std::max(p, kProbClip), 1.0 - kProbClip);
}

}  // namespace

void TrainConfig::check() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("train: alpha must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("train: temperature must be positive");
  if (!(beta_graph >= 0.0)) throw std::invalid_argument("train: beta_graph must be >= 0");
  if (!(sigma_x > 0.0)) throw std::invalid_argument("train: sigma_x must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 0.5))
    throw std::invalid_argument("train: validation_fraction must lie in [0, 0.5)");
  if (mc_samples == 0) throw std::invalid_argument("train: mc_samples must be positive");
}

double ElboBreakdown::sum_recon_x() const {
  double s = 0.0;
  for (double v : recon_x) s += v;
  return s;
}
double ElboBreakdown::sum_logp_z_prior() const {
  double s = 0.0;
  for (double v : logp_z_prior) s += v;
  return s;
}
double ElboBreakdown::sum_entropy_qz() const {
  double s = 0.0;
  for (double v : entropy_qz) s += v;
  return s;
}
double ElboBreakdown::sum_recon_graph() const {
  double s = 0.0;
  for (double v : recon_graph) s += v;
  return s;
}

bool ElboBreakdown::finite() const {
  auto ok = [](const std::vector<double>& xs) {
    for (double x : xs)
      if (!std::isfinite(x)) return false;
    return true;
  };
  return ok(recon_x) && ok(logp_z_prior) && ok(entropy_qz) && ok(recon_graph) &&
         std::isfinite(kl_u) && std::isfinite(total);
}

NonFiniteElbo::NonFiniteElbo(ElboBreakdown b)
    : std::runtime_error("elbo: non-finite term"), breakdown(std::move(b)) {}

TrainingDiverged::TrainingDiverged(ElboBreakdown last, std::size_t at)
    : std::runtime_error("training diverged at epoch " + std::to_string(at)),
      last_finite(std::move(last)),
      epoch(at) {}

Var gaussian_kl_to_standard(Tape& t, Var mu, Var logsigma) {
  if (!t.value(mu).same_shape(t.value(logsigma)))
    throw std::invalid_argument("kl: mu and logsigma shapes differ");
  Var two_logsigma = t.scale(logsigma, 2.0);
  Var inner = t.sub(t.add(t.mul(mu, mu), t.exp(two_logsigma)), t.shift(two_logsigma, 1.0));
  return t.scale(t.sum(inner), 0.5);
}

Var gaussian_log_pdf(Tape& t, Var x, Var mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("log_pdf: sigma must be positive");
  const double n = static_cast<double>(t.value(x).size());
  Var diff = t.sub(x, mu);
  Var quad = t.scale(t.sum(t.mul(diff, diff)), -0.5 / (sigma * sigma));
  return t.shift(quad, -0.5 * n * (kLog2Pi + 2.0 * std::log(sigma)));
}

Var gaussian_entropy(Tape& t, Var logsigma) {
  return t.sum(t.shift(logsigma, kHalfLog2PiE));
}

Var bernoulli_ll_from_logits(Tape& t, Var logits, const Tensor& target, const Tensor& mask) {
  Var tgt = t.leaf(target);
  Var msk = t.leaf(mask);
  Var per_entry = t.sub(t.mul(tgt, logits), t.softplus(logits));
  return t.sum(t.mul(msk, per_entry));
}

double bernoulli_ll_from_probs(const Tensor& probs, const Tensor& target, const Tensor& mask) {
  if (!probs.same_shape(target) || !probs.same_shape(mask))
    throw std::invalid_argument("bernoulli ll: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double p = clip_prob(probs[i]);
    s += mask[i] * (target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p));
  }
  return s;
}

std::vector<PreparedView> prepare_views(const MultiViewDataset& d) {
  std::vector<PreparedView> out;
  out.reserve(d.views.size());
  for (const View& v : d.views) {
    PreparedView pv;
    pv.x = v.attributes;
    pv.adjacency = v.graph.adjacency();
    pv.a_hat = normalize_adjacency(pv.adjacency);
    pv.mask = Tensor::full({v.graph.n_nodes, v.graph.n_nodes}, 1.0);
    for (std::size_t i = 0; i < v.graph.n_nodes; ++i) pv.mask(i, i) = 0.0;
    out.push_back(std::move(pv));
  }
  return out;
}

void Holdout::apply(std::vector<PreparedView>& views) const {
  for (const HeldOutPair& p : pairs) {
    views[p.view].mask(p.i, p.j) = 0.0;
    views[p.view].mask(p.j, p.i) = 0.0;
  }
}

Holdout make_holdout(const MultiViewDataset& d, double fraction, Rng& rng) {
  Holdout h;
  if (fraction <= 0.0) return h;
  for (std::size_t v = 0; v < d.views.size(); ++v) {
    const ViewGraph& g = d.views[v].graph;
    std::vector<std::pair<std::size_t, std::size_t>> edges(g.edges.begin(), g.edges.end());
    const std::size_t n_hold =
        static_cast<std::size_t>(fraction * static_cast<double>(edges.size()));
    if (n_hold == 0) continue;
    // partial Fisher-Yates: first n_hold entries become the held-out edges
    for (std::size_t k = 0; k < n_hold; ++k) {
      const std::size_t pick = k + rng.below(edges.size() - k);
      std::swap(edges[k], edges[pick]);
      h.pairs.push_back({v, edges[k].first, edges[k].second, 1.0});
    }
    // equally many non-edges, rejection-sampled
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    std::size_t found = 0, attempts = 0;
    const std::size_t max_attempts = 1000 * n_hold + 1000;
    while (found < n_hold && attempts < max_attempts) {
      ++attempts;
      std::size_t i = rng.below(g.n_nodes);
      std::size_t j = rng.below(g.n_nodes);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (g.has_edge(i, j) || chosen.count({i, j})) continue;
      chosen.insert({i, j});
      h.pairs.push_back({v, i, j, 0.0});
      ++found;
    }
  }
  return h;
}

ElboResult elbo_forward_tape(Tape& t, BayRelModel& m, const std::vector<PreparedView>& views,
                             const TrainConfig& cfg, Rng& rng) {
  const std::size_t nviews = views.size();
  if (nviews != m.config.n_views)
    throw std::invalid_argument("elbo: model expects " + std::to_string(m.config.n_views) +
                                " views, dataset has " + std::to_string(nviews));
  std::vector<Var> x_leaf(nviews), a_hat_leaf(nviews);
  std::vector<Tensor> adjacencies;
  for (std::size_t v = 0; v < nviews; ++v) {
    if (views[v].x.cols() != m.config.attr_dim)
      throw std::invalid_argument("elbo: view attribute dim " + std::to_string(views[v].x.cols()) +
                                  " does not match model attr_dim " +
                                  std::to_string(m.config.attr_dim));
    x_leaf[v] = t.leaf(views[v].x);
    a_hat_leaf[v] = t.leaf(views[v].a_hat);
    adjacencies.push_back(views[v].adjacency);
  }

  // Posterior parameters are sample-independent; only the draws repeat.
  std::vector<Var> mu_u(nviews), logsig_u(nviews), mu_z(nviews), logsig_z(nviews);
  for (std::size_t v = 0; v < nviews; ++v) {
    std::tie(mu_u[v], logsig_u[v]) = m.encoder.encode(t, a_hat_leaf[v], x_leaf[v]);
    std::tie(mu_z[v], logsig_z[v]) = m.z_posterior.forward(t, x_leaf[v], a_hat_leaf[v], v);
  }

  Var kl_u_var = gaussian_kl_to_standard(t, mu_u[0], logsig_u[0]);
  for (std::size_t v = 1; v < nviews; ++v)
    kl_u_var = t.add(kl_u_var, gaussian_kl_to_standard(t, mu_u[v], logsig_u[v]));

  std::vector<Var> entropy_vars(nviews);
  for (std::size_t v = 0; v < nviews; ++v) entropy_vars[v] = gaussian_entropy(t, logsig_z[v]);

  const std::size_t S = cfg.mc_samples;
  std::vector<std::vector<Var>> recon_x_s(nviews), logp_z_s(nviews), recon_g_s(nviews);

  for (std::size_t s = 0; s < S; ++s) {
    std::vector<Var> u(nviews);
    for (std::size_t v = 0; v < nviews; ++v) {
      Var noise = t.leaf(rng.sample(RandomKind::standard_gaussian, t.value(mu_u[v]).shape));
      u[v] = reparameterize(t, mu_u[v], logsig_u[v], noise);
    }
    for (std::size_t v = 0; v < nviews; ++v) {
      Var logits = view_adjacency_logits(t, u[v]);
      recon_g_s[v].push_back(
          bernoulli_ll_from_logits(t, logits, views[v].adjacency, views[v].mask));
    }
    std::map<std::pair<std::size_t, std::size_t>, Var> cross;
    for (std::size_t v = 0; v < nviews; ++v)
      for (std::size_t w = v + 1; w < nviews; ++w) {
        Var p = m.link.probs(t, u[v], u[w]);
        Var noise = t.leaf(rng.sample(RandomKind::logistic, t.value(p).shape));
        cross[{v, w}] = sample_bipartite_relaxed(t, p, cfg.temperature, noise);
      }
    Var overall = assemble_overall_soft(t, adjacencies, cross);
    Var a_hat_overall = normalize_adjacency_soft(t, overall);
    Var u_all = t.concat_rows(u);
    Var mu_prior_all = m.z_prior.mean(t, a_hat_overall, u_all);

    std::size_t offset = 0;
    for (std::size_t v = 0; v < nviews; ++v) {
      const std::size_t n = views[v].x.rows();
      Var mu_prior_v = t.slice_rows(mu_prior_all, offset, n);
      offset += n;
      Var z_noise = t.leaf(rng.sample(RandomKind::standard_gaussian, t.value(mu_z[v]).shape));
      Var z = reparameterize(t, mu_z[v], logsig_z[v], z_noise);
      logp_z_s[v].push_back(gaussian_log_pdf(t, z, mu_prior_v, 1.0));
      Var mu_x = m.decoder.decode(t, z, v);
      recon_x_s[v].push_back(gaussian_log_pdf(t, x_leaf[v], mu_x, cfg.sigma_x));
    }
  }

  auto average = [&](const std::vector<Var>& parts) {
    Var acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) acc = t.add(acc, parts[i]);
    return S == 1 ? acc : t.scale(acc, 1.0 / static_cast<double>(S));
  };

  ElboResult res;
  res.breakdown.recon_x.resize(nviews);
  res.breakdown.logp_z_prior.resize(nviews);
  res.breakdown.entropy_qz.resize(nviews);
  res.breakdown.recon_graph.resize(nviews);

  Var total;
  for (std::size_t v = 0; v < nviews; ++v) {
    Var rx = average(recon_x_s[v]);
    Var lz = average(logp_z_s[v]);
    Var rg = average(recon_g_s[v]);
    res.breakdown.recon_x[v] = t.value(rx).item();
    res.breakdown.logp_z_prior[v] = t.value(lz).item();
    res.breakdown.entropy_qz[v] = t.value(entropy_vars[v]).item();
    res.breakdown.recon_graph[v] = t.value(rg).item();
    Var view_term = t.add(t.add(rx, t.scale(lz, cfg.alpha)),
                          t.add(entropy_vars[v], t.scale(rg, cfg.beta_graph)));
    total = v == 0 ? view_term : t.add(total, view_term);
  }
  total = t.sub(total, kl_u_var);
  res.breakdown.kl_u = t.value(kl_u_var).item();
  res.breakdown.total = t.value(total).item();
  res.total = total;
  if (!res.breakdown.finite()) throw NonFiniteElbo(res.breakdown);
  return res;
}

ElboBreakdown elbo_forward(BayRelModel& m, const MultiViewDataset& d, const TrainConfig& cfg,
                           Rng& rng) {
  Tape t;
  auto views = prepare_views(d);
  return elbo_forward_tape(t, m, views, cfg, rng).breakdown;
}

double validation_ll(BayRelModel& m, const std::vector<PreparedView>& views,
                     const Holdout& holdout) {
  if (holdout.pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  Tape t;
  std::vector<Tensor> logits(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    auto [mu_u, logsig_u] = m.encoder.encode(t, t.leaf(views[v].a_hat), t.leaf(views[v].x));
    (void)logsig_u;
    logits[v] = t.value(view_adjacency_logits(t, mu_u));
  }
  double ll = 0.0;
  for (const HeldOutPair& p : holdout.pairs) {
    const double logit = logits[p.view](p.i, p.j);
    ll += p.target * logit - softplus_stable(logit);
  }
  return ll;
}

std::vector<Tensor> snapshot_params(const std::vector<Parameter*>& params) {
  std::vector<Tensor> snap;
  snap.reserve(params.size());
  for (const Parameter* p : params) snap.push_back(p->value);
  return snap;
}

void restore_params(const std::vector<Parameter*>& params, const std::vector<Tensor>& snap) {
  if (params.size() != snap.size()) throw std::logic_error("restore: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

History fit(BayRelModel& m, const MultiViewDataset& d, const TrainConfig& cfg) {
  cfg.check();
  if (auto report = validate_dataset(d); !report.ok)
    throw std::invalid_argument("fit: invalid dataset: " + report.message);

  Rng holdout_rng(derive_seed(cfg.seed, kHoldoutStream));
  Holdout holdout = make_holdout(d, cfg.validation_fraction, holdout_rng);
  auto views = prepare_views(d);
  holdout.apply(views);

  auto params = m.parameters();
  Adam adam(params, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(cfg.seed, kEpochStream));

  History history;
  const bool has_val = !holdout.pairs.empty();
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_snapshot;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Tape tape;
    ElboResult res;
    try {
      res = elbo_forward_tape(tape, m, views, cfg, rng);
    } catch (const NonFiniteElbo&) {
      ElboBreakdown last =
          history.rows.empty() ? ElboBreakdown{} : history.rows.back().elbo;
      throw TrainingDiverged(std::move(last), epoch);
    }
    adam.zero_grad();
    tape.backward(tape.negate(res.total));
    adam.step();

    const double vll = validation_ll(m, views, holdout);
    history.rows.push_back({epoch, res.breakdown, vll});

    if (has_val) {
      if (vll > best_val) {
        best_val = vll;
        best_snapshot = snapshot_params(params);
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    }
  }
  if (has_val && !best_snapshot.empty()) restore_params(params, best_snapshot);
  return history;
}

void History::save_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch\ttotal\trecon_x\tlogp_z_prior\tentropy_qz\tkl_U\trecon_graph\tval_ll\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const Row& r : rows) {
    out << r.epoch << '\t' << fmt(r.elbo.total) << '\t' << fmt(r.elbo.sum_recon_x()) << '\t'
        << fmt(r.elbo.sum_logp_z_prior()) << '\t' << fmt(r.elbo.sum_entropy_qz()) << '\t'
        << fmt(r.elbo.kl_u) << '\t' << fmt(r.elbo.sum_recon_graph()) << '\t' << fmt(r.val_ll)
        << '\n';
  }
}

// --- checkpoint ---

namespace {

constexpr char kMagic[8] = {'B', 'A', 'Y', 'R', 'E', 'L', 'C', 'P'};
constexpr std::uint8_t kVersion = 1;

void put_u8(std::ofstream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_u32(std::ofstream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint8_t get_u8(std::ifstream& in) {
  char c;
  if (!in.get(c)) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint8_t>(c);
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(in)) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(get_u8(in)) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void checkpoint_save(const BayRelModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  put_u8(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(m.config.n_views));
  put_u32(out, static_cast<std::uint32_t>(m.config.attr_dim));
  put_u32(out, static_cast<std::uint32_t>(m.config.hidden_dim));
  put_u32(out, static_cast<std::uint32_t>(m.config.latent_dim));
  put_u8(out, m.config.link == LinkKind::inner_product ? 0 : 1);
  put_f64(out, m.config.temperature);
  put_f64(out, m.config.sigma_x);
  put_u64(out, m.config.seed);
  const auto params = m.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u8(out, static_cast<std::uint8_t>(p->value.rank()));
    for (std::size_t d : p->value.shape) put_u64(out, d);
    for (double v : p->value.data) put_f64(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

BayRelModel checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const std::uint8_t version = get_u8(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig cfg;
  cfg.n_views = get_u32(in);
  cfg.attr_dim = get_u32(in);
  cfg.hidden_dim = get_u32(in);
  cfg.latent_dim = get_u32(in);
  cfg.link = get_u8(in) == 0 ? LinkKind::inner_product : LinkKind::bernoulli_poisson;
  cfg.temperature = get_f64(in);
  cfg.sigma_x = get_f64(in);
  cfg.seed = get_u64(in);
  BayRelModel model(cfg);
  auto params = model.parameters();
  const std::uint32_t n_params = get_u32(in);
  if (n_params != params.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                             " parameters, file has " + std::to_string(n_params));
  for (Parameter* p : params) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated file");
    if (name != p->name)
      throw std::runtime_error("checkpoint: parameter '" + name + "' does not match expected '" +
                               p->name + "'");
    const std::uint8_t rank = get_u8(in);
    Shape shape(rank);
    for (std::uint8_t i = 0; i < rank; ++i) shape[i] = get_u64(in);
    if (shape != p->value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                               shape_str(shape) + ", model " + shape_str(p->value.shape));
    for (double& v : p->value.data) v = get_f64(in);
  }
  return model;
}

}  // namespace bayrel
