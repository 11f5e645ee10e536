#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bayrel/gradcheck.hpp"
#include "bayrel/synth.hpp"
#include "bayrel/training.hpp"

using namespace bayrel;
namespace fs = std::filesystem;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double eval_kl(const Tensor& mu, const Tensor& logsigma) {
  Tape t;
  return t.value(gaussian_kl_to_standard(t, t.leaf(mu), t.leaf(logsigma))).item();
}

double eval_entropy(const Tensor& logsigma) {
  Tape t;
  return t.value(gaussian_entropy(t, t.leaf(logsigma))).item();
}

double eval_log_pdf(const Tensor& x, const Tensor& mu, double sigma) {
  Tape t;
  return t.value(gaussian_log_pdf(t, t.leaf(x), t.leaf(mu), sigma)).item();
}

double softplus_ref(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

MultiViewDataset zero_dataset(std::size_t n1, std::size_t n2, std::size_t d) {
  MultiViewDataset ds;
  ds.sample_dim = d;
  View a, b;
  a.name = "a";
  a.graph = ViewGraph(n1);
  a.attributes = Tensor::zeros({n1, d});
  b.name = "b";
  b.graph = ViewGraph(n2);
  b.attributes = Tensor::zeros({n2, d});
  ds.views = {a, b};
  return ds;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("bayrel_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gaussian KL closed values") {
  CHECK(eval_kl(Tensor::zeros({3, 2}), Tensor::zeros({3, 2})) == 0.0);
  CHECK(eval_kl(Tensor::scalar(1.0), Tensor::scalar(0.0)) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("gaussian KL matches a Monte Carlo estimate within 4 standard errors") {
  Rng rng(99);
  for (int rep = 0; rep < 5; ++rep) {
    const double mu = 2.0 * rng.gaussian();
    const double logsigma = 0.5 * rng.gaussian();
    const double sigma = std::exp(logsigma);
    const std::size_t n = 100000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = mu + sigma * rng.gaussian();
      const double log_q = -0.5 * (kLog2Pi + 2.0 * logsigma) - (x - mu) * (x - mu) / (2 * sigma * sigma);
      const double log_p = -0.5 * kLog2Pi - 0.5 * x * x;
      const double term = log_q - log_p;
      sum += term;
      sq += term * term;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    const double closed = eval_kl(Tensor::scalar(mu), Tensor::scalar(logsigma));
    CHECK(std::fabs(closed - mean) <= 4.0 * se);
  }
}

TEST_CASE("gaussian log pdf closed values and scalar-loop oracle") {
  CHECK(eval_log_pdf(Tensor::scalar(0.7), Tensor::scalar(0.7), 1.0) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-14));
  const double at1 = eval_log_pdf(Tensor::scalar(0.7), Tensor::scalar(0.7), 1.0);
  const double at2 = eval_log_pdf(Tensor::scalar(0.7), Tensor::scalar(0.7), 2.0);
  CHECK(at1 - at2 == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(4);
  Tensor x = rng.sample(RandomKind::standard_gaussian, {4, 3});
  Tensor mu = rng.sample(RandomKind::standard_gaussian, {4, 3});
  const double sigma = 1.7;
  double expect = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    expect += -0.5 * std::log(2.0 * M_PI * sigma * sigma) -
              (x[i] - mu[i]) * (x[i] - mu[i]) / (2.0 * sigma * sigma);
  CHECK(eval_log_pdf(x, mu, sigma) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gaussian entropy closed values and Monte Carlo") {
  CHECK(eval_entropy(Tensor::scalar(0.0)) == doctest::Approx(1.4189385332046727).epsilon(1e-12));
  const double base = eval_entropy(Tensor::full({5}, 0.2));
  const double shifted = eval_entropy(Tensor::full({5}, 0.2 + 0.3));
  CHECK(shifted - base == doctest::Approx(5 * 0.3).epsilon(1e-12));

  Rng rng(123);
  const double logsigma = 0.4;
  const double sigma = std::exp(logsigma);
  const std::size_t n = 100000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sigma * rng.gaussian();
    const double log_q = -0.5 * (kLog2Pi + 2.0 * logsigma) - x * x / (2 * sigma * sigma);
    sum += -log_q;
    sq += log_q * log_q;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::fabs(eval_entropy(Tensor::scalar(logsigma)) - mean) <= 4.0 * se);
}

TEST_CASE("bernoulli log likelihood: masked count, saturation, scalar oracle") {
  Tape t;
  Tensor logits = Tensor::zeros({3, 3});
  Tensor target = Tensor::zeros({3, 3});
  target(0, 1) = 1.0;
  Tensor mask = Tensor::full({3, 3}, 1.0);
  for (std::size_t i = 0; i < 3; ++i) mask(i, i) = 0.0;
  const double ll = t.value(bernoulli_ll_from_logits(t, t.leaf(logits), target, mask)).item();
  CHECK(ll == doctest::Approx(6.0 * std::log(0.5)).epsilon(1e-12));

  Tensor sharp({2, 2}, {30.0, -30.0, -30.0, 30.0});
  Tensor id = Tensor::eye(2);
  Tape t2;
  const double perfect =
      t2.value(bernoulli_ll_from_logits(t2, t2.leaf(sharp), id, Tensor::full({2, 2}, 1.0))).item();
  CHECK(std::fabs(perfect) < 1e-10);

  Rng rng(31);
  Tensor rl = rng.sample(RandomKind::standard_gaussian, {3, 3});
  Tensor rt = Tensor::zeros({3, 3});
  Tensor rm = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    rt[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    rm[i] = rng.bernoulli(0.7) ? 1.0 : 0.0;
  }
  double oracle = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    if (rm[i] == 0.0) continue;
    const double p = 1.0 / (1.0 + std::exp(-rl[i]));
    oracle += rt[i] * std::log(p) + (1.0 - rt[i]) * std::log(1.0 - p);
  }
  Tape t3;
  CHECK(t3.value(bernoulli_ll_from_logits(t3, t3.leaf(rl), rt, rm)).item() ==
        doctest::Approx(oracle).epsilon(1e-10));

  // probs path agrees with the logits path away from the clip boundary
  Tensor probs = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 9; ++i) probs[i] = 1.0 / (1.0 + std::exp(-rl[i]));
  CHECK(bernoulli_ll_from_probs(probs, rt, rm) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("elbo: zero model on an edgeless zero dataset matches the hand-assembled sum") {
  const std::size_t n1 = 3, n2 = 2, d = 4, latent = 8;
  MultiViewDataset ds = zero_dataset(n1, n2, d);
  ModelConfig mc;
  mc.attr_dim = d;
  mc.seed = 1;
  BayRelModel model(mc);
  for (Parameter* p : model.parameters())
    for (double& v : p->value.data) v = 0.0;

  TrainConfig cfg;
  cfg.alpha = 30.0;
  cfg.beta_graph = 1.0;
  cfg.sigma_x = 1.0;

  const std::uint64_t seed = 42;
  Rng rng(seed);
  ElboBreakdown bd = elbo_forward(model, ds, cfg, rng);

  // replicate the draw order: eps_U per view, logistic per pair, eps_Z per view
  Rng oracle_rng(seed);
  Tensor eps_u1 = oracle_rng.sample(RandomKind::standard_gaussian, {n1, latent});
  Tensor eps_u2 = oracle_rng.sample(RandomKind::standard_gaussian, {n2, latent});
  (void)oracle_rng.sample(RandomKind::logistic, {n1, n2});
  Tensor eps_z1 = oracle_rng.sample(RandomKind::standard_gaussian, {n1, latent});
  Tensor eps_z2 = oracle_rng.sample(RandomKind::standard_gaussian, {n2, latent});

  auto recon_graph_of = [&](const Tensor& u, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double dot = 0.0;
        for (std::size_t k = 0; k < latent; ++k) dot += u(i, k) * u(j, k);
        s += -softplus_ref(dot);  // target is 0 everywhere
      }
    return s;
  };
  auto logp_z_of = [&](const Tensor& eps) {
    double s = 0.0;
    for (double e : eps.data) s += -0.5 * (kLog2Pi + e * e);
    return s;
  };
  const double entropy1 = n1 * latent * (0.5 * std::log(2.0 * M_PI * std::exp(1.0)));
  const double entropy2 = n2 * latent * (0.5 * std::log(2.0 * M_PI * std::exp(1.0)));
  const double recon_x1 = -0.5 * n1 * d * kLog2Pi;
  const double recon_x2 = -0.5 * n2 * d * kLog2Pi;

  CHECK(bd.kl_u == 0.0);
  CHECK(bd.recon_x[0] == doctest::Approx(recon_x1).epsilon(1e-12));
  CHECK(bd.recon_x[1] == doctest::Approx(recon_x2).epsilon(1e-12));
  CHECK(bd.entropy_qz[0] == doctest::Approx(entropy1).epsilon(1e-12));
  CHECK(bd.recon_graph[0] == doctest::Approx(recon_graph_of(eps_u1, n1)).epsilon(1e-10));
  CHECK(bd.recon_graph[1] == doctest::Approx(recon_graph_of(eps_u2, n2)).epsilon(1e-10));
  CHECK(bd.logp_z_prior[0] == doctest::Approx(logp_z_of(eps_z1)).epsilon(1e-10));
  CHECK(bd.logp_z_prior[1] == doctest::Approx(logp_z_of(eps_z2)).epsilon(1e-10));

  const double hand_total = recon_x1 + recon_x2 + entropy1 + entropy2 +
                            cfg.alpha * (logp_z_of(eps_z1) + logp_z_of(eps_z2)) +
                            cfg.beta_graph *
                                (recon_graph_of(eps_u1, n1) + recon_graph_of(eps_u2, n2));
  CHECK(bd.total == doctest::Approx(hand_total).epsilon(1e-10));
}

TEST_CASE("elbo breakdown total equals the documented weighted sum") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 5;
  BayRelModel model(mc);
  TrainConfig cfg;
  cfg.alpha = 30.0;
  cfg.beta_graph = 0.7;
  Rng rng(8);
  ElboBreakdown bd = elbo_forward(model, ds, cfg, rng);
  double expect = -bd.kl_u;
  for (std::size_t v = 0; v < 2; ++v)
    expect += bd.recon_x[v] + cfg.alpha * bd.logp_z_prior[v] + bd.entropy_qz[v] +
              cfg.beta_graph * bd.recon_graph[v];
  CHECK(std::fabs(bd.total - expect) <= 1e-10 * std::fabs(expect));
}

TEST_CASE("elbo with alpha=1 beta=0 reduces to the four-term objective") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 6;
  BayRelModel model(mc);
  TrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta_graph = 0.0;
  Rng rng(8);
  ElboBreakdown bd = elbo_forward(model, ds, cfg, rng);
  const double four_terms =
      bd.sum_recon_x() + bd.sum_logp_z_prior() + bd.sum_entropy_qz() - bd.kl_u;
  CHECK(bd.total == doctest::Approx(four_terms).epsilon(1e-12));
}

TEST_CASE("elbo evaluations with the same seed are bit-identical") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 7;
  BayRelModel model(mc);
  TrainConfig cfg;
  Rng r1(101), r2(101);
  ElboBreakdown a = elbo_forward(model, ds, cfg, r1);
  ElboBreakdown b = elbo_forward(model, ds, cfg, r2);
  CHECK(a.total == b.total);
  CHECK(a.kl_u == b.kl_u);
  for (std::size_t v = 0; v < 2; ++v) {
    CHECK(a.recon_x[v] == b.recon_x[v]);
    CHECK(a.logp_z_prior[v] == b.logp_z_prior[v]);
    CHECK(a.recon_graph[v] == b.recon_graph[v]);
  }
}

TEST_CASE("elbo reports non-finite terms with the breakdown attached") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 9;
  BayRelModel model(mc);
  model.parameters()[0]->value[0] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  Rng rng(1);
  CHECK_THROWS_AS(elbo_forward(model, ds, cfg, rng), NonFiniteElbo);
}

TEST_CASE("fit: lr=0 leaves parameters at their initial values") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 11;
  BayRelModel model(mc);
  const auto before = snapshot_params(model.parameters());
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 5;
  fit(model, ds, cfg);
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value.data == before[i].data);
}

TEST_CASE("fit: smoothed ELBO improves on the small fixture") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 12;
  BayRelModel model(mc);
  TrainConfig cfg;
  cfg.epochs = 220;
  cfg.early_stop_patience = 220;
  cfg.seed = 12;
  History h = fit(model, ds, cfg);
  REQUIRE(h.rows.size() == 220);
  double window = 0.0;
  for (std::size_t e = 180; e < 200; ++e) window += h.rows[e].elbo.total;
  window /= 20.0;
  CHECK(window > h.rows[0].elbo.total);
  for (const auto& row : h.rows) CHECK(row.elbo.finite());
}

TEST_CASE("fit: same seed gives identical parameters and history") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 13;
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 4;
  BayRelModel m1(mc), m2(mc);
  History h1 = fit(m1, ds, cfg);
  History h2 = fit(m2, ds, cfg);
  REQUIRE(h1.rows.size() == h2.rows.size());
  for (std::size_t i = 0; i < h1.rows.size(); ++i)
    CHECK(h1.rows[i].elbo.total == h2.rows[i].elbo.total);
  auto p1 = m1.parameters(), p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value.data == p2[i]->value.data);
}

TEST_CASE("fit: divergence raises TrainingDiverged") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 14;
  BayRelModel model(mc);
  model.parameters()[0]->value[0] = 1e308;
  TrainConfig cfg;
  cfg.epochs = 3;
  CHECK_THROWS_AS(fit(model, ds, cfg), TrainingDiverged);
}

TEST_CASE("history TSV has the documented columns") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 15;
  BayRelModel model(mc);
  TrainConfig cfg;
  cfg.epochs = 3;
  History h = fit(model, ds, cfg);
  const fs::path dir = scratch_dir("history");
  h.save_tsv(dir / "history.tsv");
  std::ifstream in(dir / "history.tsv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch\ttotal\trecon_x\tlogp_z_prior\tentropy_qz\tkl_U\trecon_graph\tval_ll");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 3);
}

TEST_CASE("checkpoint: byte-identical round trip and same-seed ELBO") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 16;
  mc.link = LinkKind::bernoulli_poisson;
  BayRelModel model(mc);
  TrainConfig cfg;
  cfg.epochs = 10;
  fit(model, ds, cfg);

  const fs::path dir = scratch_dir("ckpt");
  checkpoint_save(model, dir / "a.ckpt");
  BayRelModel loaded = checkpoint_load(dir / "a.ckpt");
  checkpoint_save(loaded, dir / "b.ckpt");
  CHECK(read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt"));

  Rng r1(33), r2(33);
  CHECK(elbo_forward(model, ds, cfg, r1).total == elbo_forward(loaded, ds, cfg, r2).total);
}

TEST_CASE("checkpoint: corrupt magic, bad version, truncation") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 17;
  BayRelModel model(mc);
  const fs::path dir = scratch_dir("ckpt_bad");
  checkpoint_save(model, dir / "good.ckpt");
  auto bytes = read_bytes(dir / "good.ckpt");

  auto write_variant = [&](const fs::path& p, std::vector<char> b) {
    std::ofstream out(p, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write_variant(dir / "magic.ckpt", bad_magic);
  CHECK_THROWS_WITH_AS(checkpoint_load(dir / "magic.ckpt"), doctest::Contains("magic"),
                       std::runtime_error);

  auto bad_version = bytes;
  bad_version[8] = 9;
  write_variant(dir / "version.ckpt", bad_version);
  CHECK_THROWS_WITH_AS(checkpoint_load(dir / "version.ckpt"), doctest::Contains("version"),
                       std::runtime_error);

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  write_variant(dir / "short.ckpt", truncated);
  CHECK_THROWS_AS(checkpoint_load(dir / "short.ckpt"), std::runtime_error);
}

TEST_CASE("full-model gradients match finite differences on the two-view fixture") {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.attr_dim = ds.sample_dim;
  mc.seed = 18;
  BayRelModel model(mc);
  randomize_params(model, 98);
  TrainConfig cfg;
  GradCheckReport report = gradient_check(model, ds, cfg, /*noise_seed=*/506);
  CHECK(report.pass);
  CHECK(report.worst() <= 1e-4);

  GradCheckReport corrupted = gradient_check(model, ds, cfg, 506, 1e-4, 1e-4, /*corrupt=*/3);
  CHECK_FALSE(corrupted.pass);
}

TEST_CASE("holdout masks exclude sampled pairs and stay out of training") {
  auto [ds, truth] = easy_fixture();
  (void)truth;
  Rng rng(6);
  Holdout h = make_holdout(ds, 0.1, rng);
  CHECK(!h.pairs.empty());
  auto views = prepare_views(ds);
  h.apply(views);
  std::size_t n_edges = 0, n_non = 0;
  for (const HeldOutPair& p : h.pairs) {
    CHECK(views[p.view].mask(p.i, p.j) == 0.0);
    CHECK(views[p.view].mask(p.j, p.i) == 0.0);
    CHECK(views[p.view].adjacency(p.i, p.j) == p.target);
    (p.target == 1.0 ? n_edges : n_non)++;
  }
  CHECK(n_edges == n_non);
}
