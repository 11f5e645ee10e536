#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "bayrel/adam.hpp"
#include "bayrel/graph.hpp"
#include "bayrel/model.hpp"

namespace bayrel {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 1000;
  double alpha = 30.0;
  double temperature = 0.66;
  double beta_graph = 1.0;
  double sigma_x = 1.0;
  std::uint64_t seed = 1;
  std::size_t early_stop_patience = 100;
  double validation_fraction = 0.05;
  std::size_t mc_samples = 1;

  void check() const;  // throws on out-of-range values
};

// One objective evaluation, term by term. Per-view entries are stored
// before the alpha / beta weights; total carries the weights:
//   total = sum_v [recon_x + alpha*logp_z_prior + entropy_qz
//                  + beta*recon_graph] - kl_u
struct ElboBreakdown {
  std::vector<double> recon_x;
  std::vector<double> logp_z_prior;
  std::vector<double> entropy_qz;
  std::vector<double> recon_graph;
  double kl_u = 0.0;
  double total = 0.0;

  double sum_recon_x() const;
  double sum_logp_z_prior() const;
  double sum_entropy_qz() const;
  double sum_recon_graph() const;
  bool finite() const;
};

struct NonFiniteElbo : std::runtime_error {
  ElboBreakdown breakdown;
  explicit NonFiniteElbo(ElboBreakdown b);
};

struct TrainingDiverged : std::runtime_error {
  ElboBreakdown last_finite;
  std::size_t epoch;
  TrainingDiverged(ElboBreakdown last, std::size_t at);
};

// --- closed-form pieces (tape compositions) ---

// KL(N(mu, exp(logsigma)^2) || N(0, I)) summed over elements.
Var gaussian_kl_to_standard(Tape& t, Var mu, Var logsigma);

// sum of log N(x_i; mu_i, sigma^2) over all elements.
Var gaussian_log_pdf(Tape& t, Var x, Var mu, double sigma);

// Entropy of a diagonal Gaussian: sum of 0.5*log(2*pi*e) + logsigma.
Var gaussian_entropy(Tape& t, Var logsigma);

// sum over mask of t*log p + (1-t)*log(1-p), computed stably from logits.
Var bernoulli_ll_from_logits(Tape& t, Var logits, const Tensor& target, const Tensor& mask);

// Same quantity from probabilities, clipped to [kProbClip, 1-kProbClip].
double bernoulli_ll_from_probs(const Tensor& probs, const Tensor& target, const Tensor& mask);

// --- forward pass ---

struct PreparedView {
  Tensor x;
  Tensor a_hat;
  Tensor adjacency;
  Tensor mask;  // 1 where the pair contributes to the graph likelihood
};

std::vector<PreparedView> prepare_views(const MultiViewDataset& d);

struct HeldOutPair {
  std::size_t view = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  double target = 0.0;
};

// Removes a fraction of each view's edges (plus as many sampled
// non-edges) from the graph-likelihood mask; the pairs become the
// early-stopping validation set.
struct Holdout {
  std::vector<HeldOutPair> pairs;
  void apply(std::vector<PreparedView>& views) const;
};

Holdout make_holdout(const MultiViewDataset& d, double fraction, Rng& rng);

struct ElboResult {
  ElboBreakdown breakdown;
  Var total;
};

// Single evaluation of the objective on an existing tape. Throws
// NonFiniteElbo when any term is non-finite.
ElboResult elbo_forward_tape(Tape& t, BayRelModel& m, const std::vector<PreparedView>& views,
                             const TrainConfig& cfg, Rng& rng);

// Convenience wrapper on a fresh tape with full masks.
ElboBreakdown elbo_forward(BayRelModel& m, const MultiViewDataset& d, const TrainConfig& cfg,
                           Rng& rng);

// Bernoulli log-likelihood of the held-out pairs under the posterior-mean
// embeddings. NaN when the holdout is empty.
double validation_ll(BayRelModel& m, const std::vector<PreparedView>& views,
                     const Holdout& holdout);

struct History {
  struct Row {
    std::size_t epoch = 0;
    ElboBreakdown elbo;
    double val_ll = 0.0;
  };
  std::vector<Row> rows;

  void save_tsv(const std::filesystem::path& path) const;
};

// Full-batch Adam ascent on the ELBO with edge-holdout early stopping.
// Restores the best-validation parameters before returning (when a
// validation set exists). Throws TrainingDiverged on a non-finite
// objective.
History fit(BayRelModel& m, const MultiViewDataset& d, const TrainConfig& cfg);

// Length-prefixed binary records, magic header + version byte; bit-exact
// parameter round-trip.
void checkpoint_save(const BayRelModel& m, const std::filesystem::path& path);
BayRelModel checkpoint_load(const std::filesystem::path& path);

std::vector<Tensor> snapshot_params(const std::vector<Parameter*>& params);
void restore_params(const std::vector<Parameter*>& params, const std::vector<Tensor>& snap);

}  // namespace bayrel
