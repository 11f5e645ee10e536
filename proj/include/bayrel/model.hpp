#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bayrel/random.hpp"
#include "bayrel/tape.hpp"

namespace bayrel {

enum class Activation { relu, identity };
enum class LinkKind { inner_product, bernoulli_poisson };

std::string link_name(LinkKind k);
LinkKind link_from_name(const std::string& s);

constexpr double kProbClip = 1e-6;

// act(A_hat H W + b)
struct GcnLayer {
  Parameter weight;
  Parameter bias;
  Activation act;

  GcnLayer(const std::string& name, std::size_t in, std::size_t out, Activation a, Rng& rng,
           bool zero_init = false);
  Var forward(Tape& t, Var a_hat, Var h);
  void collect(std::vector<Parameter*>& out);
};

// act(H W + b)
struct DenseLayer {
  Parameter weight;
  Parameter bias;
  Activation act;

  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation a, Rng& rng,
             bool zero_init = false);
  Var forward(Tape& t, Var h);
  void collect(std::vector<Parameter*>& out);
};

// Two-layer GCN with a shared hidden layer and separate mean / log-sigma
// heads; the same weights serve every view.
struct EmbeddingEncoder {
  GcnLayer shared;
  GcnLayer mu_head;
  GcnLayer logsigma_head;

  EmbeddingEncoder(std::size_t attr_dim, std::size_t hidden, std::size_t latent, Rng& rng);
  std::pair<Var, Var> encode(Tape& t, Var a_hat, Var x);
  void collect(std::vector<Parameter*>& out);
};

// Cross-view edge probability head. inner_product: sigmoid(u_i . u_j).
// bernoulli_poisson: 1 - exp(-sum_k tau_k u_ik u_jk) with the exponent
// clamped at zero; tau = softplus(tau_raw) stays positive.
struct BipartiteLink {
  LinkKind kind;
  std::optional<Parameter> tau_raw;

  BipartiteLink(LinkKind k, std::size_t latent);
  Var probs(Tape& t, Var u_v, Var u_w);
  void collect(std::vector<Parameter*>& out);
};

// One-layer GCN over the overall graph with U as node attributes; the
// prior scale is fixed at one.
struct ZPrior {
  GcnLayer layer;

  ZPrior(std::size_t latent, Rng& rng);
  Var mean(Tape& t, Var a_hat_overall, Var u_all);
  void collect(std::vector<Parameter*>& out);
};

// Per-view dense trunk feeding a shared GCN trunk with separate heads.
struct ZPosterior {
  struct ViewTrunk {
    DenseLayer l1;
    DenseLayer l2;
  };
  std::vector<ViewTrunk> trunks;
  GcnLayer gcn_trunk;
  GcnLayer mu_head;
  GcnLayer logsigma_head;

  ZPosterior(std::size_t n_views, std::size_t attr_dim, std::size_t hidden, std::size_t latent,
             Rng& rng);
  std::pair<Var, Var> forward(Tape& t, Var x, Var a_hat, std::size_t view);
  void collect(std::vector<Parameter*>& out);
};

// Per-view three-layer dense decoder mapping z rows to attribute means.
struct AttributeDecoder {
  struct ViewDecoder {
    DenseLayer l1;
    DenseLayer l2;
    DenseLayer l3;
  };
  std::vector<ViewDecoder> views;

  AttributeDecoder(std::size_t n_views, std::size_t attr_dim, std::size_t latent, Rng& rng);
  Var decode(Tape& t, Var z, std::size_t view);
  void collect(std::vector<Parameter*>& out);
};

struct ModelConfig {
  std::size_t n_views = 2;
  std::size_t attr_dim = 0;
  std::size_t hidden_dim = 16;
  std::size_t latent_dim = 8;
  LinkKind link = LinkKind::inner_product;
  double temperature = 0.66;
  double sigma_x = 1.0;
  std::uint64_t seed = 1;
};

class BayRelModel {
 public:
  explicit BayRelModel(const ModelConfig& cfg);

  ModelConfig config;
  EmbeddingEncoder encoder;
  BipartiteLink link;
  ZPrior z_prior;
  ZPosterior z_posterior;
  AttributeDecoder decoder;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  BayRelModel(const ModelConfig& cfg, Rng rng);
};

// mu + exp(logsigma) * noise, elementwise; gradients reach mu and logsigma.
Var reparameterize(Tape& t, Var mu, Var logsigma, Var noise);

// logits(i, j) = u_i . u_j
Var view_adjacency_logits(Tape& t, Var u);

// sigmoid((logit(p) + logistic_noise) / temperature); p is clipped to
// [kProbClip, 1 - kProbClip] before the logit. Differentiable w.r.t. p.
Var sample_bipartite_relaxed(Tape& t, Var p, double temperature, Var logistic_noise);

// Independent Bernoulli(p_ij) draws for the test phase.
Tensor sample_bipartite_hard(const Tensor& p, Rng& rng);

}  // namespace bayrel
