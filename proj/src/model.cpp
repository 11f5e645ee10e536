#include "bayrel/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bayrel {

std::string link_name(LinkKind k) {
  return k == LinkKind::inner_product ? "ip" : "bp";
}

LinkKind link_from_name(const std::string& s) {
  if (s == "ip" || s == "inner_product") return LinkKind::inner_product;
  if (s == "bp" || s == "bernoulli_poisson") return LinkKind::bernoulli_poisson;
  throw std::invalid_argument("unknown link '" + s + "' (expected ip or bp)");
}

namespace {

// Glorot uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::zeros({in, out});
  for (double& v : w.data) v = (2.0 * rng.uniform01() - 1.0) * bound;
  return w;
}

Var activate(Tape& t, Var h, Activation a) { return a == Activation::relu ? t.relu(h) : h; }

}  // namespace

GcnLayer::GcnLayer(const std::string& name, std::size_t in, std::size_t out, Activation a,
                   Rng& rng, bool zero_init)
    : weight(name + ".weight", zero_init ? Tensor::zeros({in, out}) : glorot(in, out, rng)),
      bias(name + ".bias", Tensor::zeros({out})),
      act(a) {}

Var GcnLayer::forward(Tape& t, Var a_hat, Var h) {
  Var hw = t.matmul(h, t.param(weight));
  Var prop = t.matmul(a_hat, hw);
  return activate(t, t.add(prop, t.param(bias)), act);
}

void GcnLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation a,
                       Rng& rng, bool zero_init)
    : weight(name + ".weight", zero_init ? Tensor::zeros({in, out}) : glorot(in, out, rng)),
      bias(name + ".bias", Tensor::zeros({out})),
      act(a) {}

Var DenseLayer::forward(Tape& t, Var h) {
  return activate(t, t.add(t.matmul(h, t.param(weight)), t.param(bias)), act);
}

void DenseLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

EmbeddingEncoder::EmbeddingEncoder(std::size_t attr_dim, std::size_t hidden, std::size_t latent,
                                   Rng& rng)
    : shared("encoder.shared", attr_dim, hidden, Activation::relu, rng),
      mu_head("encoder.mu", hidden, latent, Activation::identity, rng),
      logsigma_head("encoder.logsigma", hidden, latent, Activation::identity, rng,
                    /*zero_init=*/true) {}

std::pair<Var, Var> EmbeddingEncoder::encode(Tape& t, Var a_hat, Var x) {
  Var h = shared.forward(t, a_hat, x);
  return {mu_head.forward(t, a_hat, h), logsigma_head.forward(t, a_hat, h)};
}

void EmbeddingEncoder::collect(std::vector<Parameter*>& out) {
  shared.collect(out);
  mu_head.collect(out);
  logsigma_head.collect(out);
}

BipartiteLink::BipartiteLink(LinkKind k, std::size_t latent) : kind(k) {
  if (kind == LinkKind::bernoulli_poisson) {
    // softplus(raw) = 1  =>  raw = log(e - 1)
    tau_raw.emplace("link.tau_raw", Tensor::full({latent}, std::log(std::exp(1.0) - 1.0)));
  }
}

Var BipartiteLink::probs(Tape& t, Var u_v, Var u_w) {
  if (kind == LinkKind::inner_product) {
    return t.sigmoid(t.matmul(u_v, t.transpose(u_w)));
  }
  Var tau = t.softplus(t.param(*tau_raw));
  Var scores = t.matmul(t.mul(u_v, tau), t.transpose(u_w));
  Var rate = t.clamp(scores, 0.0, std::numeric_limits<double>::infinity());
  return t.shift(t.negate(t.exp(t.negate(rate))), 1.0);  // 1 - exp(-rate)
}

void BipartiteLink::collect(std::vector<Parameter*>& out) {
  if (tau_raw) out.push_back(&*tau_raw);
}

ZPrior::ZPrior(std::size_t latent, Rng& rng)
    : layer("z_prior", latent, latent, Activation::identity, rng) {}

Var ZPrior::mean(Tape& t, Var a_hat_overall, Var u_all) {
  return layer.forward(t, a_hat_overall, u_all);
}

void ZPrior::collect(std::vector<Parameter*>& out) { layer.collect(out); }

ZPosterior::ZPosterior(std::size_t n_views, std::size_t attr_dim, std::size_t hidden,
                       std::size_t latent, Rng& rng)
    : gcn_trunk("z_post.gcn", latent, hidden, Activation::relu, rng),
      mu_head("z_post.mu", hidden, latent, Activation::identity, rng),
      logsigma_head("z_post.logsigma", hidden, latent, Activation::identity, rng,
                    /*zero_init=*/true) {
  for (std::size_t v = 0; v < n_views; ++v) {
    const std::string prefix = "z_post.view" + std::to_string(v);
    trunks.push_back(ViewTrunk{
        DenseLayer(prefix + ".fc1", attr_dim, hidden, Activation::relu, rng),
        DenseLayer(prefix + ".fc2", hidden, latent, Activation::relu, rng),
    });
  }
}

std::pair<Var, Var> ZPosterior::forward(Tape& t, Var x, Var a_hat, std::size_t view) {
  if (view >= trunks.size())
    throw std::out_of_range("z posterior: unknown view index " + std::to_string(view));
  ViewTrunk& trunk = trunks[view];
  Var h = trunk.l2.forward(t, trunk.l1.forward(t, x));
  Var g = gcn_trunk.forward(t, a_hat, h);
  return {mu_head.forward(t, a_hat, g), logsigma_head.forward(t, a_hat, g)};
}

void ZPosterior::collect(std::vector<Parameter*>& out) {
  for (ViewTrunk& tr : trunks) {
    tr.l1.collect(out);
    tr.l2.collect(out);
  }
  gcn_trunk.collect(out);
  mu_head.collect(out);
  logsigma_head.collect(out);
}

AttributeDecoder::AttributeDecoder(std::size_t n_views, std::size_t attr_dim, std::size_t latent,
                                   Rng& rng) {
  for (std::size_t v = 0; v < n_views; ++v) {
    const std::string prefix = "decoder.view" + std::to_string(v);
    views.push_back(ViewDecoder{
        DenseLayer(prefix + ".fc1", latent, latent, Activation::relu, rng),
        DenseLayer(prefix + ".fc2", latent, attr_dim, Activation::relu, rng),
        DenseLayer(prefix + ".fc3", attr_dim, attr_dim, Activation::identity, rng),
    });
  }
}

Var AttributeDecoder::decode(Tape& t, Var z, std::size_t view) {
  if (view >= views.size())
    throw std::out_of_range("decoder: unknown view index " + std::to_string(view));
  ViewDecoder& d = views[view];
  return d.l3.forward(t, d.l2.forward(t, d.l1.forward(t, z)));
}

void AttributeDecoder::collect(std::vector<Parameter*>& out) {
  for (ViewDecoder& d : views) {
    d.l1.collect(out);
    d.l2.collect(out);
    d.l3.collect(out);
  }
}

BayRelModel::BayRelModel(const ModelConfig& cfg) : BayRelModel(cfg, Rng(cfg.seed)) {}

// Members consume the one rng in declaration order, so a seed pins every
// initial weight.
BayRelModel::BayRelModel(const ModelConfig& cfg, Rng rng)
    : config(cfg),
      encoder(cfg.attr_dim, cfg.hidden_dim, cfg.latent_dim, rng),
      link(cfg.link, cfg.latent_dim),
      z_prior(cfg.latent_dim, rng),
      z_posterior(cfg.n_views, cfg.attr_dim, cfg.hidden_dim, cfg.latent_dim, rng),
      decoder(cfg.n_views, cfg.attr_dim, cfg.latent_dim, rng) {
  if (cfg.attr_dim == 0) throw std::invalid_argument("model: attr_dim must be positive");
  if (cfg.n_views < 2) throw std::invalid_argument("model: need at least two views");
}

std::vector<Parameter*> BayRelModel::parameters() {
  std::vector<Parameter*> out;
  encoder.collect(out);
  link.collect(out);
  z_prior.collect(out);
  z_posterior.collect(out);
  decoder.collect(out);
  return out;
}

std::vector<const Parameter*> BayRelModel::parameters() const {
  auto mut = const_cast<BayRelModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Var reparameterize(Tape& t, Var mu, Var logsigma, Var noise) {
  return t.add(mu, t.mul(t.exp(logsigma), noise));
}

Var view_adjacency_logits(Tape& t, Var u) { return t.matmul(u, t.transpose(u)); }

Var sample_bipartite_relaxed(Tape& t, Var p, double temperature, Var logistic_noise) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("relaxed sample: temperature must be positive, got " +
                                std::to_string(temperature));
  Var pc = t.clamp(p, kProbClip, 1.0 - kProbClip);
  Var logit = t.sub(t.log(pc), t.log(t.shift(t.negate(pc), 1.0)));
  return t.sigmoid(t.scale(t.add(logit, logistic_noise), 1.0 / temperature));
}

Tensor sample_bipartite_hard(const Tensor& p, Rng& rng) {
  Tensor out = Tensor::zeros(p.shape);
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
  return out;
}

}  // namespace bayrel
