#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bayrel/graph.hpp"
#include "bayrel/metrics.hpp"
#include "bayrel/srca.hpp"
#include "bayrel/synth.hpp"

using namespace bayrel;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("bayrel_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& out_log) {
  const std::string cmd = std::string(BAYREL_CLI_BIN) + " " + args + " > " + out_log.string() +
                          " 2>" + out_log.string() + ".err";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("--help exits 0 and documents the flags; unknown flags exit nonzero") {
  const fs::path dir = scratch_dir("help");
  CHECK(run("--help", dir / "help.log") == 0);
  for (const char* sub : {"synth", "train", "infer", "eval", "srca", "gradcheck"})
    CHECK(slurp(dir / "help.log").find(sub) != std::string::npos);
  CHECK(run("train --help", dir / "train_help.log") == 0);
  const std::string train_help = slurp(dir / "train_help.log");
  for (const char* flag : {"--seed", "--lr", "--epochs", "--alpha", "--temperature",
                           "--beta-graph", "--link", "--out", "--dataset"})
    CHECK(train_help.find(flag) != std::string::npos);
  CHECK(run("train --no-such-flag", dir / "bad.log") != 0);
  CHECK(run("", dir / "nosub.log") != 0);
}

TEST_CASE("synth refuses to overwrite without --force and reports real densities") {
  const fs::path dir = scratch_dir("synth");
  const std::string opts = "--out " + (dir / "data").string() + " --seed 5 --n1 18 --n2 12 --d 20 --planted 10";
  CHECK(run("synth " + opts, dir / "first.log") == 0);
  CHECK(run("synth " + opts, dir / "second.log") != 0);
  CHECK(run("synth " + opts + " --force", dir / "third.log") == 0);

  // summary densities match the files
  MultiViewDataset ds = load_dataset(dir / "data" / "dataset.manifest");
  const std::string summary = slurp(dir / "first.log");
  for (const View& v : ds.views) {
    char expect[128];
    std::snprintf(expect, sizeof(expect), "%s\tnodes=%zu\tedges=%zu", v.name.c_str(),
                  v.graph.n_nodes, v.graph.n_edges());
    CHECK(summary.find(expect) != std::string::npos);
  }
  PlantedTruth truth = load_truth_tsv(dir / "data" / "truth.tsv", ds);
  CHECK(truth.pairs.size() == 10);
}

TEST_CASE("train rejects a broken dataset with a nonzero exit") {
  const fs::path dir = scratch_dir("badtrain");
  // dataset with mismatched sample dimensions
  std::ofstream(dir / "a_attrs.tsv") << "node\ts1\ts2\nx\t1\t2\ny\t3\t4\n";
  std::ofstream(dir / "b_attrs.tsv") << "node\ts1\nz\t1\nw\t2\n";
  std::ofstream(dir / "a_edges.tsv") << "x\ty\n";
  std::ofstream(dir / "b_edges.tsv") << "z\tw\n";
  std::ofstream(dir / "dataset.manifest")
      << "[view.a]\nedges = a_edges.tsv\nattributes = a_attrs.tsv\n"
      << "[view.b]\nedges = b_edges.tsv\nattributes = b_attrs.tsv\n";
  const int code = run("train --dataset " + (dir / "dataset.manifest").string() + " --out " +
                           (dir / "out").string(),
                       dir / "train.log");
  CHECK(code != 0);
  CHECK(slurp(dir / "train.log.err").find("sample dimension mismatch") != std::string::npos);
}

TEST_CASE("full pipeline: train, infer, eval agree with library-level calls") {
  const fs::path dir = scratch_dir("pipeline");
  CHECK(run("synth --out " + (dir / "data").string() + " --seed 9 --n1 16 --n2 12 --d 18 --planted 8",
            dir / "synth.log") == 0);
  const std::string manifest = (dir / "data" / "dataset.manifest").string();
  CHECK(run("train --dataset " + manifest + " --out " + (dir / "run").string() +
                " --seed 2 --epochs 30 --patience 30",
            dir / "train.log") == 0);
  CHECK(fs::exists(dir / "run" / "model.ckpt"));
  CHECK(fs::exists(dir / "run" / "history.tsv"));

  CHECK(run("infer --checkpoint " + (dir / "run" / "model.ckpt").string() + " --dataset " +
                manifest + " --out " + (dir / "run" / "edges.tsv").string() +
                " --seed 4 --samples 8 --density 0.3",
            dir / "infer.log") == 0);
  BipartiteProbs probs = read_edges_tsv(dir / "run" / "edges.tsv");
  CHECK(probs.matrix.rows() * probs.matrix.cols() == 16 * 12);

  // edge file is sorted descending
  std::ifstream edges(dir / "run" / "edges.tsv");
  std::string line;
  double prev = 2.0;
  while (std::getline(edges, line)) {
    const double p = std::stod(line.substr(line.rfind('\t') + 1));
    CHECK(p <= prev);
    prev = p;
  }

  // thresholded edge count
  std::ifstream binary(dir / "run" / "edges_d0.3.tsv");
  std::size_t count = 0;
  while (std::getline(binary, line))
    if (!line.empty()) ++count;
  CHECK(count == static_cast<std::size_t>(std::ceil(0.3 * 16 * 12)));

  CHECK(run("eval --edges " + (dir / "run" / "edges.tsv").string() + " --truth " +
                (dir / "data" / "truth.tsv").string() + " --validation " +
                (dir / "data" / "truth.tsv").string() + " --density 0.3 --out " +
                (dir / "report.tsv").string(),
            dir / "eval.log") == 0);

  // compare the reported AUC and sensitivity with direct library calls
  MultiViewDataset ds = load_dataset(dir / "data" / "dataset.manifest");
  PlantedTruth truth = load_truth_tsv(dir / "data" / "truth.tsv", ds);
  Tensor tm = Tensor::zeros({16, 12});
  std::map<std::string, std::size_t> ri, ci;
  for (std::size_t i = 0; i < probs.row_names.size(); ++i) ri[probs.row_names[i]] = i;
  for (std::size_t j = 0; j < probs.col_names.size(); ++j) ci[probs.col_names[j]] = j;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [i, j] : truth.pairs) {
    const std::size_t r = ri.at(ds.views[0].graph.node_names[i]);
    const std::size_t c = ci.at(ds.views[1].graph.node_names[j]);
    tm(r, c) = 1.0;
    pairs.push_back({r, c});
  }
  const double auc = roc_auc(probs.matrix, tm);
  const double sens = prediction_sensitivity(threshold_by_density(probs.matrix, 0.3), pairs);
  const std::string report = slurp(dir / "report.tsv");
  char auc_line[64], sens_line[64];
  std::snprintf(auc_line, sizeof(auc_line), "auc\t-\t%.6g", auc);
  std::snprintf(sens_line, sizeof(sens_line), "sensitivity\tdensity=0.3\t%.6g", sens);
  CHECK(report.find(auc_line) != std::string::npos);
  CHECK(report.find(sens_line) != std::string::npos);
  CHECK(report.rfind("metric\tqualifier\tvalue\n", 0) == 0);
}

TEST_CASE("infer rejects a checkpoint trained for different dimensions") {
  const fs::path dir = scratch_dir("mismatch");
  CHECK(run("synth --out " + (dir / "d1").string() + " --seed 1 --n1 10 --n2 8 --d 12 --planted 5",
            dir / "s1.log") == 0);
  CHECK(run("synth --out " + (dir / "d2").string() + " --seed 1 --n1 10 --n2 8 --d 16 --planted 5",
            dir / "s2.log") == 0);
  CHECK(run("train --dataset " + (dir / "d1" / "dataset.manifest").string() + " --out " +
                (dir / "run").string() + " --seed 1 --epochs 5 --patience 5",
            dir / "t.log") == 0);
  const int code = run("infer --checkpoint " + (dir / "run" / "model.ckpt").string() +
                           " --dataset " + (dir / "d2" / "dataset.manifest").string() +
                           " --out " + (dir / "e.tsv").string(),
                       dir / "i.log");
  CHECK(code != 0);
  const std::string err = slurp(dir / "i.log.err");
  CHECK(err.find("D=12") != std::string::npos);
  CHECK(err.find("D=16") != std::string::npos);
}

TEST_CASE("srca output matches the library matrix on the same dataset") {
  const fs::path dir = scratch_dir("srca");
  CHECK(run("synth --out " + (dir / "data").string() + " --seed 3 --n1 9 --n2 7 --d 15 --planted 4",
            dir / "synth.log") == 0);
  CHECK(run("srca --dataset " + (dir / "data" / "dataset.manifest").string() + " --out " +
                (dir / "srca.tsv").string(),
            dir / "srca.log") == 0);
  MultiViewDataset ds = load_dataset(dir / "data" / "dataset.manifest");
  SrcaResult expect = srca_matrix(ds.views[0].attributes, ds.views[1].attributes);
  BipartiteProbs got = read_edges_tsv(dir / "srca.tsv");
  std::map<std::string, std::size_t> ri, ci;
  for (std::size_t i = 0; i < got.row_names.size(); ++i) ri[got.row_names[i]] = i;
  for (std::size_t j = 0; j < got.col_names.size(); ++j) ci[got.col_names[j]] = j;
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      CHECK(got.matrix(ri.at(ds.views[0].graph.node_names[i]),
                       ci.at(ds.views[1].graph.node_names[j])) ==
            doctest::Approx(expect.matrix(i, j)).epsilon(1e-12));
}

TEST_CASE("gradcheck passes by default and fails with an injected fault") {
  const fs::path dir = scratch_dir("gradcheck");
  CHECK(run("gradcheck --seed 1", dir / "ok.log") == 0);
  const std::string ok = slurp(dir / "ok.log");
  CHECK(ok.find("PASS") != std::string::npos);
  CHECK(ok.find("encoder.shared.weight") != std::string::npos);  // per-parameter rows
  CHECK(run("gradcheck --seed 1 --inject-fault 7", dir / "bad.log") != 0);
  CHECK(slurp(dir / "bad.log").find("FAIL") != std::string::npos);
}

TEST_CASE("config file supplies defaults and flags override it") {
  const fs::path dir = scratch_dir("config");
  CHECK(run("synth --out " + (dir / "data").string() + " --seed 2 --n1 12 --n2 10 --d 14 --planted 6",
            dir / "synth.log") == 0);
  std::ofstream(dir / "run.conf") << "[train]\ndataset = " << (dir / "data" / "dataset.manifest").string()
                                  << "\nout = " << (dir / "from_config").string()
                                  << "\nepochs = 7\npatience = 7\nseed = 5\n";
  CHECK(run("--config " + (dir / "run.conf").string() + " train", dir / "cfg.log") == 0);
  std::ifstream hist(dir / "from_config" / "history.tsv");
  std::string line;
  std::size_t rows = 0;
  std::getline(hist, line);  // header
  while (std::getline(hist, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 7);

  // flag overrides the config value
  CHECK(run("--config " + (dir / "run.conf").string() + " train --epochs 4 --patience 4 --out " +
                (dir / "overridden").string(),
            dir / "cfg2.log") == 0);
  std::ifstream hist2(dir / "overridden" / "history.tsv");
  rows = 0;
  std::getline(hist2, line);
  while (std::getline(hist2, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);

  // unknown keys in the config are rejected
  std::ofstream(dir / "bad.conf") << "[train]\nbogus_key = 1\n";
  CHECK(run("--config " + (dir / "bad.conf").string() + " train --dataset x --out y",
            dir / "cfg3.log") != 0);
}

TEST_CASE("eval resolves node names or reports the offender") {
  const fs::path dir = scratch_dir("evalnames");
  CHECK(run("synth --out " + (dir / "data").string() + " --seed 4 --n1 8 --n2 6 --d 12 --planted 3",
            dir / "synth.log") == 0);
  CHECK(run("train --dataset " + (dir / "data" / "dataset.manifest").string() + " --out " +
                (dir / "run").string() + " --seed 1 --epochs 5 --patience 5",
            dir / "train.log") == 0);
  CHECK(run("infer --checkpoint " + (dir / "run" / "model.ckpt").string() + " --dataset " +
                (dir / "data" / "dataset.manifest").string() + " --out " +
                (dir / "edges.tsv").string() + " --samples 0",
            dir / "infer.log") == 0);
  std::ofstream(dir / "bogus.tsv") << "no_such_node\tview2_0\n";
  const int code = run("eval --edges " + (dir / "edges.tsv").string() + " --validation " +
                           (dir / "bogus.tsv").string() + " --density 0.2",
                       dir / "eval.log");
  CHECK(code != 0);
  CHECK(slurp(dir / "eval.log.err").find("no_such_node") != std::string::npos);

  // anchor-form positive accuracy and set-based negative accuracy run
  std::ofstream(dir / "anchor.tsv") << "anchor:view1_0\nview2_0\nview2_1\n";
  std::ofstream(dir / "s1.txt") << "view2_0\n";
  std::ofstream(dir / "s2.txt") << "view2_1\nview2_2\n";
  std::ofstream(dir / "t.txt") << "view1_0\nview1_1\n";
  CHECK(run("eval --edges " + (dir / "edges.tsv").string() + " --validation " +
                (dir / "anchor.tsv").string() + " --set-s1 " + (dir / "s1.txt").string() +
                " --set-s2 " + (dir / "s2.txt").string() + " --set-t " +
                (dir / "t.txt").string() + " --density 0.25 --out " + (dir / "report.tsv").string(),
            dir / "eval2.log") == 0);
  const std::string report = slurp(dir / "report.tsv");
  CHECK(report.find("positive_accuracy\tdensity=0.25") != std::string::npos);
  CHECK(report.find("negative_accuracy\tdensity=0.25") != std::string::npos);
}
