#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bayrel/graph.hpp"
#include "bayrel/model.hpp"

namespace bayrel {

// Cross-view edge probabilities between one pair of views; the model's
// principal output.
struct BipartiteProbs {
  std::string view_row;
  std::string view_col;
  std::vector<std::string> row_names;
  std::vector<std::string> col_names;
  Tensor matrix;  // N_row x N_col, entries in [0, 1]
};

// Monte Carlo posterior-mean edge probability over num_samples posterior
// draws of the embeddings; num_samples = 0 uses the posterior mean
// embeddings directly.
BipartiteProbs infer_bipartite(BayRelModel& m, const MultiViewDataset& d, std::size_t view_row,
                               std::size_t view_col, std::size_t num_samples, Rng& rng);

// Keeps the top ceil(target_density * N * M) entries; ties resolved by
// (row, column) order.
Tensor threshold_by_density(const Tensor& probs, double target_density);

// Fraction of the anchor row's validated columns present in the binary
// matrix.
double positive_accuracy(const Tensor& binary, std::size_t anchor_row,
                         const std::vector<std::size_t>& validated_cols);

// 1 - (# triples (i in s1, j in s2, k in t_rows) where k connects to both
// i and j) / (|s1| |s2| |t_rows|). s1 and s2 index columns, t_rows rows.
double negative_accuracy(const Tensor& binary, const std::vector<std::size_t>& s1_cols,
                         const std::vector<std::size_t>& s2_cols,
                         const std::vector<std::size_t>& t_rows);

// True-positive rate over a validated edge set.
double prediction_sensitivity(const Tensor& binary,
                              const std::vector<std::pair<std::size_t, std::size_t>>& validated);

// Mean entrywise KL(Bern(p1) || Bern(p2)), both clipped.
double bipartite_kl(const Tensor& p1, const Tensor& p2);

// Mann-Whitney AUC of scores against a binary truth matrix; ties count
// one half.
double roc_auc(const Tensor& scores, const Tensor& truth);

// Validated cross-view interactions, either as flat (row name, col name)
// pairs or as one anchor node with its partner list.
struct ValidationSet {
  std::optional<std::string> anchor;
  std::vector<std::pair<std::string, std::string>> edges;  // anchor form: (anchor, target)
};

ValidationSet load_validation(const std::filesystem::path& path);

// TSV `name_row<TAB>name_col<TAB>probability`, descending probability,
// ties by names.
void write_edges_tsv(const std::filesystem::path& path, const BipartiteProbs& probs);
BipartiteProbs read_edges_tsv(const std::filesystem::path& path);

}  // namespace bayrel
