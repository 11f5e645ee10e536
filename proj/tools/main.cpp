#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bayrel/gradcheck.hpp"
#include "bayrel/log.hpp"
#include "bayrel/manifest.hpp"
#include "bayrel/metrics.hpp"
#include "bayrel/srca.hpp"
#include "bayrel/synth.hpp"
#include "bayrel/training.hpp"

using namespace bayrel;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kInferStream = 2;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string density_tag(double d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", d);
  return buf;
}

struct SynthArgs {
  fs::path out;
  std::uint64_t seed = 7;
  bool force = false;
  SynthConfig cfg;
};

int cmd_synth(SynthArgs& a) {
  a.cfg.seed = a.seed;
  const fs::path manifest = a.out / "dataset.manifest";
  if (fs::exists(manifest) && !a.force) {
    log_error(manifest.string() + " exists; pass --force to overwrite");
    return 1;
  }
  Rng rng(a.cfg.seed);
  auto [ds, truth] = generate(a.cfg, rng);
  save_dataset(a.out, ds);
  write_truth_tsv(a.out / "truth.tsv", truth, ds);
  for (const View& v : ds.views)
    std::cout << "view\t" << v.name << "\tnodes=" << v.graph.n_nodes
              << "\tedges=" << v.graph.n_edges() << "\tdensity=" << fmt(v.graph.density())
              << "\tsamples=" << ds.sample_dim << "\n";
  std::cout << "planted\t" << truth.pairs.size() << "\n";
  log_info("dataset written to " + a.out.string());
  return 0;
}

struct TrainArgs {
  fs::path dataset;
  fs::path out;
  std::uint64_t seed = 1;
  std::string link = "ip";
  TrainConfig cfg;
};

int cmd_train(TrainArgs& a) {
  MultiViewDataset ds = load_dataset(a.dataset);
  if (auto report = validate_dataset(ds); !report.ok) {
    log_error("invalid dataset: " + report.message);
    return 1;
  }
  ModelConfig mc;
  mc.n_views = ds.views.size();
  mc.attr_dim = ds.sample_dim;
  mc.link = link_from_name(a.link);
  mc.temperature = a.cfg.temperature;
  mc.sigma_x = a.cfg.sigma_x;
  mc.seed = derive_seed(a.seed, kModelStream);
  a.cfg.seed = a.seed;
  BayRelModel model(mc);

  const auto start = std::chrono::steady_clock::now();
  History history = fit(model, ds, a.cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  fs::create_directories(a.out);
  checkpoint_save(model, a.out / "model.ckpt");
  history.save_tsv(a.out / "history.tsv");
  const auto& last = history.rows.back();
  std::cout << "epochs\t" << history.rows.size() << "\n";
  std::cout << "final_elbo\t" << fmt(last.elbo.total) << "\n";
  log_info("trained " + std::to_string(history.rows.size()) + " epochs in " + fmt(secs) + " s");
  return 0;
}

void write_binary_edges(const fs::path& path, const BipartiteProbs& probs, double density) {
  Tensor binary = threshold_by_density(probs.matrix, density);
  struct Row {
    double p;
    std::size_t i, j;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < binary.rows(); ++i)
    for (std::size_t j = 0; j < binary.cols(); ++j)
      if (binary(i, j) != 0.0) rows.push_back({probs.matrix(i, j), i, j});
  std::sort(rows.begin(), rows.end(), [&probs](const Row& x, const Row& y) {
    if (x.p != y.p) return x.p > y.p;
    if (probs.row_names[x.i] != probs.row_names[y.i])
      return probs.row_names[x.i] < probs.row_names[y.i];
    return probs.col_names[x.j] < probs.col_names[y.j];
  });
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Row& r : rows) out << probs.row_names[r.i] << '\t' << probs.col_names[r.j] << '\n';
}

struct InferArgs {
  fs::path checkpoint;
  fs::path dataset;
  fs::path out;
  std::uint64_t seed = 1;
  std::size_t samples = 64;
  std::vector<double> densities;
};

int cmd_infer(InferArgs& a) {
  MultiViewDataset ds = load_dataset(a.dataset);
  if (auto report = validate_dataset(ds); !report.ok) {
    log_error("invalid dataset: " + report.message);
    return 1;
  }
  BayRelModel model = checkpoint_load(a.checkpoint);
  if (model.config.n_views != ds.views.size() || model.config.attr_dim != ds.sample_dim) {
    log_error("checkpoint/dataset mismatch: checkpoint expects " +
              std::to_string(model.config.n_views) + " views with D=" +
              std::to_string(model.config.attr_dim) + ", dataset has " +
              std::to_string(ds.views.size()) + " views with D=" +
              std::to_string(ds.sample_dim));
    return 1;
  }
  for (const View& v : ds.views)
    if (v.graph.n_nodes == 0) {
      log_error("empty view " + v.name);
      return 1;
    }
  Rng rng(derive_seed(a.seed, kInferStream));
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  for (std::size_t v = 0; v < ds.views.size(); ++v)
    for (std::size_t w = v + 1; w < ds.views.size(); ++w) {
      BipartiteProbs probs = infer_bipartite(model, ds, v, w, a.samples, rng);
      fs::path target = a.out;
      if (ds.views.size() > 2) {
        target = a.out.parent_path() /
                 (a.out.stem().string() + "_" + probs.view_row + "_" + probs.view_col +
                  a.out.extension().string());
      }
      write_edges_tsv(target, probs);
      std::cout << "pair\t" << probs.view_row << "\t" << probs.view_col << "\trows="
                << probs.matrix.rows() * probs.matrix.cols() << "\t" << target.string() << "\n";
      for (double d : a.densities) {
        fs::path bpath = target.parent_path() /
                         (target.stem().string() + "_d" + density_tag(d) +
                          target.extension().string());
        write_binary_edges(bpath, probs, d);
        std::cout << "density\t" << density_tag(d) << "\t" << bpath.string() << "\n";
      }
    }
  return 0;
}

std::vector<std::string> read_name_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open set file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty()) names.push_back(line);
  }
  if (names.empty()) throw std::runtime_error(path.string() + ": empty set");
  return names;
}

std::size_t index_of(const std::vector<std::string>& names, const std::string& name,
                     const std::string& what) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw std::runtime_error("unresolved " + what + " node name '" + name + "'");
}

bool contains(const std::vector<std::string>& names, const std::string& name) {
  for (const auto& n : names)
    if (n == name) return true;
  return false;
}

struct EvalArgs {
  fs::path edges;
  fs::path edges2;
  fs::path validation;
  fs::path truth;
  fs::path set_s1, set_s2, set_t;
  fs::path out;
  std::vector<double> densities;
};

int cmd_eval(EvalArgs& a) {
  BipartiteProbs probs = read_edges_tsv(a.edges);
  std::vector<std::pair<std::string, std::string>> report;  // (metric \t qualifier, value)
  auto add = [&report](const std::string& metric, const std::string& qual, double value) {
    report.emplace_back(metric + "\t" + qual, fmt(value));
  };

  std::optional<ValidationSet> vs;
  if (!a.validation.empty()) vs = load_validation(a.validation);

  if (vs && !vs->anchor) {
    // flat pairs: sensitivity at each requested density
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& [rn, cn] : vs->edges)
      pairs.emplace_back(index_of(probs.row_names, rn, "row"),
                         index_of(probs.col_names, cn, "column"));
    for (double d : a.densities) {
      Tensor binary = threshold_by_density(probs.matrix, d);
      add("sensitivity", "density=" + density_tag(d), prediction_sensitivity(binary, pairs));
    }
  }
  if (vs && vs->anchor) {
    // anchor may live on either side; orient so it indexes a row
    const bool on_rows = contains(probs.row_names, *vs->anchor);
    Tensor matrix = on_rows ? probs.matrix : transpose_raw(probs.matrix);
    const auto& anchor_names = on_rows ? probs.row_names : probs.col_names;
    const auto& target_names = on_rows ? probs.col_names : probs.row_names;
    const std::size_t anchor = index_of(anchor_names, *vs->anchor, "anchor");
    std::vector<std::size_t> targets;
    for (const auto& [unused, tn] : vs->edges)
      targets.push_back(index_of(target_names, tn, "target"));
    for (double d : a.densities) {
      Tensor binary = threshold_by_density(matrix, d);
      add("positive_accuracy", "density=" + density_tag(d),
          positive_accuracy(binary, anchor, targets));
    }
  }
  if (!a.set_s1.empty() || !a.set_s2.empty() || !a.set_t.empty()) {
    if (a.set_s1.empty() || a.set_s2.empty() || a.set_t.empty())
      throw std::runtime_error("negative accuracy needs --set-s1, --set-s2, and --set-t");
    const auto names_s1 = read_name_list(a.set_s1);
    const auto names_s2 = read_name_list(a.set_s2);
    const auto names_t = read_name_list(a.set_t);
    // orient so that s1/s2 index columns and T rows
    const bool s_on_cols = contains(probs.col_names, names_s1.front());
    Tensor matrix = s_on_cols ? probs.matrix : transpose_raw(probs.matrix);
    const auto& scol = s_on_cols ? probs.col_names : probs.row_names;
    const auto& trow = s_on_cols ? probs.row_names : probs.col_names;
    std::vector<std::size_t> s1, s2, t_rows;
    for (const auto& n : names_s1) s1.push_back(index_of(scol, n, "s1"));
    for (const auto& n : names_s2) s2.push_back(index_of(scol, n, "s2"));
    for (const auto& n : names_t) t_rows.push_back(index_of(trow, n, "T"));
    for (double d : a.densities) {
      Tensor binary = threshold_by_density(matrix, d);
      add("negative_accuracy", "density=" + density_tag(d),
          negative_accuracy(binary, s1, s2, t_rows));
    }
  }
  if (!a.truth.empty()) {
    ValidationSet ts = load_validation(a.truth);
    Tensor truth = Tensor::zeros(probs.matrix.shape);
    for (const auto& [rn, cn] : ts.edges)
      truth(index_of(probs.row_names, rn, "row"), index_of(probs.col_names, cn, "column")) = 1.0;
    add("auc", "-", roc_auc(probs.matrix, truth));
  }
  if (!a.edges2.empty()) {
    BipartiteProbs other = read_edges_tsv(a.edges2);
    if (other.row_names != probs.row_names || other.col_names != probs.col_names)
      throw std::runtime_error("edge files do not cover the same node sets");
    add("bipartite_kl", "-", bipartite_kl(probs.matrix, other.matrix));
  }

  std::ostringstream os;
  os << "metric\tqualifier\tvalue\n";
  for (const auto& [key, value] : report) os << key << '\t' << value << '\n';
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write " + a.out.string());
    f << os.str();
  }
  return 0;
}

struct SrcaArgs {
  fs::path dataset;
  fs::path out;
};

int cmd_srca(SrcaArgs& a) {
  MultiViewDataset ds = load_dataset(a.dataset);
  if (auto report = validate_dataset(ds); !report.ok) {
    log_error("invalid dataset: " + report.message);
    return 1;
  }
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  for (std::size_t v = 0; v < ds.views.size(); ++v)
    for (std::size_t w = v + 1; w < ds.views.size(); ++w) {
      SrcaResult res = srca_matrix(ds.views[v].attributes, ds.views[w].attributes);
      if (res.degenerate_rows > 0)
        log_info(std::to_string(res.degenerate_rows) + " constant-row pairings scored 0 for " +
                 ds.views[v].name + "/" + ds.views[w].name);
      BipartiteProbs probs;
      probs.view_row = ds.views[v].name;
      probs.view_col = ds.views[w].name;
      probs.row_names = ds.views[v].graph.node_names;
      probs.col_names = ds.views[w].graph.node_names;
      probs.matrix = std::move(res.matrix);
      fs::path target = a.out;
      if (ds.views.size() > 2)
        target = a.out.parent_path() /
                 (a.out.stem().string() + "_" + probs.view_row + "_" + probs.view_col +
                  a.out.extension().string());
      write_edges_tsv(target, probs);
      std::cout << "pair\t" << probs.view_row << "\t" << probs.view_col << "\trows="
                << probs.matrix.rows() * probs.matrix.cols() << "\t" << target.string() << "\n";
    }
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::string link = "ip";
  long inject_fault = -1;
};

int cmd_gradcheck(GradcheckArgs& a) {
  auto [ds, truth] = two_view_fixture();
  (void)truth;
  ModelConfig mc;
  mc.n_views = 2;
  mc.attr_dim = ds.sample_dim;
  mc.link = link_from_name(a.link);
  mc.seed = derive_seed(a.seed, kModelStream);
  BayRelModel model(mc);
  randomize_params(model, derive_seed(a.seed, 3));
  TrainConfig cfg;
  GradCheckReport report =
      gradient_check(model, ds, cfg, derive_seed(a.seed, 4), 1e-4, 1e-4, a.inject_fault);
  std::cout << "parameter\tmax_rel_err\telements\n";
  for (const GradCheckEntry& e : report.params) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", e.max_rel_err);
    std::cout << e.name << '\t' << buf << '\t' << e.elements << '\n';
  }
  std::cout << (report.pass ? "PASS" : "FAIL") << "\tworst=" << fmt(report.worst())
            << "\ttolerance=" << fmt(report.tolerance) << "\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BayReL: bipartite interaction inference across node-attributed views"};
  app.require_subcommand(1);
  app.set_config("--config")->check(CLI::ExistingFile);
  app.allow_config_extras(false);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a planted multi-view dataset");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_flag("--force", synth_args.force, "overwrite an existing dataset");
  synth->add_option("--n1", synth_args.cfg.view_sizes[0], "view-1 node count");
  synth->add_option("--n2", synth_args.cfg.view_sizes[1], "view-2 node count");
  synth->add_option("--d", synth_args.cfg.samples, "shared sample dimension");
  synth->add_option("--communities", synth_args.cfg.communities, "communities per view");
  synth->add_option("--p-in", synth_args.cfg.p_in, "within-community edge probability");
  synth->add_option("--p-out", synth_args.cfg.p_out, "across-community edge probability");
  synth->add_option("--planted", synth_args.cfg.planted_edges, "planted cross-view pair count");
  synth->add_option("--signal", synth_args.cfg.signal, "signal strength in [0,1]");
  synth->add_option("--noise", synth_args.cfg.noise, "attribute noise scale");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "fit the model on a dataset manifest");
  train->add_option("--dataset", train_args.dataset, "dataset manifest")->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--seed", train_args.seed, "training seed");
  train->add_option("--link", train_args.link, "bipartite link: ip or bp")
      ->check(CLI::IsMember({"ip", "bp"}));
  train->add_option("--lr", train_args.cfg.learning_rate, "learning rate");
  train->add_option("--epochs", train_args.cfg.epochs, "training epochs");
  train->add_option("--alpha", train_args.cfg.alpha, "prior-term weight");
  train->add_option("--temperature", train_args.cfg.temperature, "concrete temperature");
  train->add_option("--beta-graph", train_args.cfg.beta_graph, "graph reconstruction weight");
  train->add_option("--sigma-x", train_args.cfg.sigma_x, "attribute observation scale");
  train->add_option("--patience", train_args.cfg.early_stop_patience, "early-stop patience");
  train->add_option("--val-fraction", train_args.cfg.validation_fraction,
                    "held-out edge fraction");
  train->add_option("--mc-samples", train_args.cfg.mc_samples, "Monte Carlo samples per step");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "rank cross-view edges with a trained model");
  infer->add_option("--checkpoint", infer_args.checkpoint, "model checkpoint")->required();
  infer->add_option("--dataset", infer_args.dataset, "dataset manifest")->required();
  infer->add_option("--out", infer_args.out, "edges TSV path")->required();
  infer->add_option("--seed", infer_args.seed, "sampling seed");
  infer->add_option("--samples", infer_args.samples,
                    "posterior draws to average (0 = posterior mean)");
  infer->add_option("--density", infer_args.densities,
                    "also write binary edges at this density (repeatable)");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "score an edge ranking");
  eval->add_option("--edges", eval_args.edges, "probability edges TSV")->required();
  eval->add_option("--edges2", eval_args.edges2, "second edges TSV for the bipartite KL");
  eval->add_option("--validation", eval_args.validation, "validated pairs (flat or anchor form)");
  eval->add_option("--truth", eval_args.truth, "ground-truth edge list for AUC");
  eval->add_option("--set-s1", eval_args.set_s1, "negative-accuracy set s1 (one name per line)");
  eval->add_option("--set-s2", eval_args.set_s2, "negative-accuracy set s2");
  eval->add_option("--set-t", eval_args.set_t, "negative-accuracy set T");
  eval->add_option("--out", eval_args.out, "write the report here instead of stdout");
  eval->add_option("--density", eval_args.densities, "graph density for thresholded metrics");

  SrcaArgs srca_args;
  auto* srca = app.add_subcommand("srca", "rank-correlation baseline edge ranking");
  srca->add_option("--dataset", srca_args.dataset, "dataset manifest")->required();
  srca->add_option("--out", srca_args.out, "edges TSV path")->required();

  GradcheckArgs grad_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check on the fixture");
  gradcheck->add_option("--seed", grad_args.seed, "fixture seed");
  gradcheck->add_option("--link", grad_args.link, "bipartite link: ip or bp")
      ->check(CLI::IsMember({"ip", "bp"}));
  gradcheck->add_option("--inject-fault", grad_args.inject_fault,
                        "corrupt one gradient entry (self-test)")
      ->group("");  // hidden

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (train->parsed()) return cmd_train(train_args);
    if (infer->parsed()) return cmd_infer(infer_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (srca->parsed()) return cmd_srca(srca_args);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_args);
  } catch (const TrainingDiverged& e) {
    log_error(std::string(e.what()) + "; last finite ELBO " + fmt(e.last_finite.total));
    return 2;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 1;
}
