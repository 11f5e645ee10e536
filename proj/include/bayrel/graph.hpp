#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bayrel/tape.hpp"
#include "bayrel/tensor.hpp"

namespace bayrel {

// Undirected graph over named nodes. Edges are stored once as (i, j)
// with i < j; self-loops are rejected.
struct ViewGraph {
  std::size_t n_nodes = 0;
  std::vector<std::string> node_names;
  std::set<std::pair<std::size_t, std::size_t>> edges;

  ViewGraph() = default;
  explicit ViewGraph(std::size_t n);
  ViewGraph(std::size_t n, std::vector<std::string> names);

  void add_edge(std::size_t a, std::size_t b);
  bool has_edge(std::size_t a, std::size_t b) const;
  std::size_t n_edges() const { return edges.size(); }
  double density() const;
  Tensor adjacency() const;
};

struct View {
  std::string name;
  ViewGraph graph;
  Tensor attributes;  // N_v x D
};

// V node-attributed graphs sharing the sample dimension D.
struct MultiViewDataset {
  std::vector<View> views;
  std::size_t sample_dim = 0;
};

struct ValidationReport {
  bool ok = true;
  std::string message;
};

// First violation with context; never throws.
ValidationReport validate_dataset(const MultiViewDataset& d);

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Tensor normalize_adjacency(const Tensor& adjacency);
Tensor normalize_adjacency(const ViewGraph& g);

// Same normalization on the tape; soft entries keep their gradients.
Var normalize_adjacency_soft(Tape& t, Var adjacency);

// Block matrix over all views: binary view adjacencies on the diagonal,
// cross-view blocks (possibly soft) off the diagonal.
struct OverallGraph {
  Tensor matrix;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> sizes;

  std::size_t total_nodes() const { return matrix.rank() == 2 ? matrix.rows() : 0; }
  Tensor block(std::size_t v, std::size_t w) const;
};

using CrossBlocks = std::map<std::pair<std::size_t, std::size_t>, Tensor>;

// Missing cross blocks default to zeros; the mirror block is filled by
// transposition. Throws on shape mismatch, naming the view pair.
OverallGraph assemble_overall(const std::vector<const ViewGraph*>& views, const CrossBlocks& cross);

// Taped assembly for training: diagonal blocks are constants, cross
// blocks are tape vars carrying gradients. cross holds the (v, w) block
// for every v < w.
Var assemble_overall_soft(Tape& t, const std::vector<Tensor>& view_adjacencies,
                          const std::map<std::pair<std::size_t, std::size_t>, Var>& cross);

std::vector<std::size_t> view_offsets(const MultiViewDataset& d);

// --- file formats ---

// One edge per line, `name_a<TAB>name_b`; '#' starts a comment. Node
// names resolve against the attribute-file ordering.
ViewGraph load_edge_list(const std::filesystem::path& path,
                         const std::vector<std::string>& node_names);
void save_edge_list(const std::filesystem::path& path, const ViewGraph& g);

// TSV with header `node<TAB>s1...sD`, one row per node, C-locale floats.
std::pair<std::vector<std::string>, Tensor> load_attributes(const std::filesystem::path& path);
void save_attributes(const std::filesystem::path& path, const std::vector<std::string>& names,
                     const Tensor& attributes);

// Manifest: `[view.<name>]` sections with `edges` and `attributes` keys,
// paths relative to the manifest file.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const std::filesystem::path& dir, const MultiViewDataset& d,
                  const std::string& manifest_name = "dataset.manifest");

}  // namespace bayrel
