#include "bayrel/graph.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "bayrel/manifest.hpp"

namespace bayrel {

ViewGraph::ViewGraph(std::size_t n) : n_nodes(n) {
  node_names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) node_names.push_back("n" + std::to_string(i));
}

ViewGraph::ViewGraph(std::size_t n, std::vector<std::string> names)
    : n_nodes(n), node_names(std::move(names)) {
  if (node_names.size() != n_nodes)
    throw std::invalid_argument("view graph: " + std::to_string(node_names.size()) +
                                " names for " + std::to_string(n_nodes) + " nodes");
}

void ViewGraph::add_edge(std::size_t a, std::size_t b) {
  if (a == b) throw std::invalid_argument("view graph: self-loop on node " + std::to_string(a));
  if (a >= n_nodes || b >= n_nodes)
    throw std::out_of_range("view graph: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") outside " + std::to_string(n_nodes) + " nodes");
  if (a > b) std::swap(a, b);
  edges.insert({a, b});
}

bool ViewGraph::has_edge(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  return edges.count({a, b}) > 0;
}

double ViewGraph::density() const {
  if (n_nodes < 2) return 0.0;
  return 2.0 * static_cast<double>(edges.size()) /
         (static_cast<double>(n_nodes) * static_cast<double>(n_nodes - 1));
}

Tensor ViewGraph::adjacency() const {
  Tensor a = Tensor::zeros({n_nodes, n_nodes});
  for (const auto& [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

ValidationReport validate_dataset(const MultiViewDataset& d) {
  if (d.views.empty()) return {false, "dataset has no views"};
  for (std::size_t v = 0; v < d.views.size(); ++v) {
    const View& view = d.views[v];
    if (view.graph.n_nodes == 0) return {false, "view '" + view.name + "' has no nodes"};
    if (view.attributes.rank() != 2)
      return {false, "view '" + view.name + "' attributes are not a matrix"};
    if (view.attributes.rows() != view.graph.n_nodes)
      return {false, "view '" + view.name + "': " + std::to_string(view.attributes.rows()) +
                         " attribute rows for " + std::to_string(view.graph.n_nodes) + " nodes"};
    if (view.attributes.cols() != d.sample_dim)
      return {false, "sample dimension mismatch: view '" + view.name + "' has D=" +
                         std::to_string(view.attributes.cols()) + ", dataset declares D=" +
                         std::to_string(d.sample_dim)};
    if (view.graph.node_names.size() != view.graph.n_nodes)
      return {false, "view '" + view.name + "': name count does not match node count"};
    for (std::size_t i = 0; i < view.attributes.rows(); ++i)
      for (std::size_t j = 0; j < view.attributes.cols(); ++j)
        if (!std::isfinite(view.attributes(i, j)))
          return {false, "non-finite attribute in view '" + view.name + "', node '" +
                             view.graph.node_names[i] + "', sample " + std::to_string(j)};
    for (const auto& [i, j] : view.graph.edges) {
      if (i >= view.graph.n_nodes || j >= view.graph.n_nodes)
        return {false, "view '" + view.name + "': edge index out of range"};
      if (i == j) return {false, "view '" + view.name + "': self-loop stored"};
    }
  }
  return {};
}

Tensor normalize_adjacency(const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.rows() != adjacency.cols())
    throw std::invalid_argument("normalize: adjacency must be square, got " +
                                shape_str(adjacency.shape));
  const std::size_t n = adjacency.rows();
  Tensor out = adjacency;
  for (std::size_t i = 0; i < n; ++i) out(i, i) += 1.0;
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += out(i, j);
    dinv[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= dinv[i] * dinv[j];
  return out;
}

Tensor normalize_adjacency(const ViewGraph& g) { return normalize_adjacency(g.adjacency()); }

Var normalize_adjacency_soft(Tape& t, Var adjacency) {
  const Tensor& a = t.value(adjacency);
  if (a.rank() != 2 || a.rows() != a.cols())
    throw std::invalid_argument("normalize: adjacency must be square, got " + shape_str(a.shape));
  Var with_loops = t.add(adjacency, t.leaf(Tensor::eye(a.rows())));
  Var dinv_sqrt = t.powc(t.sum_axis(with_loops, 1), -0.5);
  // row scale then column scale by the same vector
  return t.mul(t.mul_rows(with_loops, dinv_sqrt), dinv_sqrt);
}

Tensor OverallGraph::block(std::size_t v, std::size_t w) const {
  Tensor b = Tensor::zeros({sizes[v], sizes[w]});
  for (std::size_t i = 0; i < sizes[v]; ++i)
    for (std::size_t j = 0; j < sizes[w]; ++j) b(i, j) = matrix(offsets[v] + i, offsets[w] + j);
  return b;
}

OverallGraph assemble_overall(const std::vector<const ViewGraph*>& views,
                              const CrossBlocks& cross) {
  OverallGraph og;
  std::size_t total = 0;
  for (const ViewGraph* g : views) {
    og.offsets.push_back(total);
    og.sizes.push_back(g->n_nodes);
    total += g->n_nodes;
  }
  og.matrix = Tensor::zeros({total, total});
  for (std::size_t v = 0; v < views.size(); ++v) {
    const Tensor a = views[v]->adjacency();
    for (std::size_t i = 0; i < og.sizes[v]; ++i)
      for (std::size_t j = 0; j < og.sizes[v]; ++j)
        og.matrix(og.offsets[v] + i, og.offsets[v] + j) = a(i, j);
  }
  for (const auto& [pair, blk] : cross) {
    const auto [v, w] = pair;
    if (v >= views.size() || w >= views.size() || v == w)
      throw std::invalid_argument("assemble: bad view pair (" + std::to_string(v) + ", " +
                                  std::to_string(w) + ")");
    if (blk.rank() != 2 || blk.rows() != og.sizes[v] || blk.cols() != og.sizes[w])
      throw std::invalid_argument("assemble: cross block (" + std::to_string(v) + ", " +
                                  std::to_string(w) + ") has shape " + shape_str(blk.shape) +
                                  ", expected [" + std::to_string(og.sizes[v]) + "x" +
                                  std::to_string(og.sizes[w]) + "]");
    const auto mirror = cross.find({w, v});
    if (mirror != cross.end() && v > w) continue;  // handled from the (v < w) side
    for (std::size_t i = 0; i < og.sizes[v]; ++i)
      for (std::size_t j = 0; j < og.sizes[w]; ++j) {
        const double val = blk(i, j);
        if (mirror != cross.end() && mirror->second(j, i) != val)
          throw std::invalid_argument("assemble: blocks (" + std::to_string(v) + ", " +
                                      std::to_string(w) + ") and its mirror are not transposes");
        og.matrix(og.offsets[v] + i, og.offsets[w] + j) = val;
        og.matrix(og.offsets[w] + j, og.offsets[v] + i) = val;
      }
  }
  return og;
}

Var assemble_overall_soft(Tape& t, const std::vector<Tensor>& view_adjacencies,
                          const std::map<std::pair<std::size_t, std::size_t>, Var>& cross) {
  const std::size_t nviews = view_adjacencies.size();
  std::vector<std::size_t> sizes;
  for (const Tensor& a : view_adjacencies) sizes.push_back(a.rows());
  std::vector<Var> rows;
  rows.reserve(nviews);
  for (std::size_t v = 0; v < nviews; ++v) {
    std::vector<Var> blocks;
    blocks.reserve(nviews);
    for (std::size_t w = 0; w < nviews; ++w) {
      if (v == w) {
        blocks.push_back(t.leaf(view_adjacencies[v]));
      } else if (auto it = cross.find({v, w}); it != cross.end()) {
        blocks.push_back(it->second);
      } else if (auto jt = cross.find({w, v}); jt != cross.end()) {
        blocks.push_back(t.transpose(jt->second));
      } else {
        blocks.push_back(t.leaf(Tensor::zeros({sizes[v], sizes[w]})));
      }
    }
    rows.push_back(t.concat_cols(blocks));
  }
  return t.concat_rows(rows);
}

std::vector<std::size_t> view_offsets(const MultiViewDataset& d) {
  std::vector<std::size_t> offs;
  std::size_t total = 0;
  for (const View& v : d.views) {
    offs.push_back(total);
    total += v.graph.n_nodes;
  }
  return offs;
}

// --- file IO ---

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, tab - start)));
    start = tab + 1;
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ViewGraph load_edge_list(const std::filesystem::path& path,
                         const std::vector<std::string>& node_names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge list " + path.string());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_names.size(); ++i) index[node_names[i]] = i;
  ViewGraph g(node_names.size(), node_names);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto fields = split_tabs(line);
    if (fields.size() != 2) throw std::runtime_error(where + ": expected name_a<TAB>name_b");
    const auto a = index.find(fields[0]);
    if (a == index.end()) throw std::runtime_error(where + ": unknown node '" + fields[0] + "'");
    const auto b = index.find(fields[1]);
    if (b == index.end()) throw std::runtime_error(where + ": unknown node '" + fields[1] + "'");
    if (a->second == b->second)
      throw std::runtime_error(where + ": self-loop on '" + fields[0] + "' rejected");
    g.add_edge(a->second, b->second);
  }
  return g;
}

void save_edge_list(const std::filesystem::path& path, const ViewGraph& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [i, j] : g.edges) out << g.node_names[i] << '\t' << g.node_names[j] << '\n';
}

std::pair<std::vector<std::string>, Tensor> load_attributes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open attribute file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty attribute file");
  const auto header = split_tabs(line);
  if (header.empty() || header[0] != "node")
    throw std::runtime_error(path.string() + ": header must start with 'node'");
  const std::size_t d = header.size() - 1;
  if (d == 0) throw std::runtime_error(path.string() + ": no sample columns");
  std::vector<std::string> names;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto fields = split_tabs(line);
    if (fields.size() != d + 1)
      throw std::runtime_error(where + ": ragged row, expected " + std::to_string(d + 1) +
                               " fields, got " + std::to_string(fields.size()));
    names.push_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j)
      values.push_back(parse_double(fields[j], where));
  }
  if (names.empty()) throw std::runtime_error(path.string() + ": no node rows");
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      if (names[i] == names[j])
        throw std::runtime_error(path.string() + ": duplicate node name '" + names[i] + "'");
  return {names, Tensor({names.size(), d}, std::move(values))};
}

void save_attributes(const std::filesystem::path& path, const std::vector<std::string>& names,
                     const Tensor& attributes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "node";
  for (std::size_t j = 0; j < attributes.cols(); ++j) out << "\ts" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < attributes.rows(); ++i) {
    out << names[i];
    for (std::size_t j = 0; j < attributes.cols(); ++j) out << '\t' << fmt_double(attributes(i, j));
    out << '\n';
  }
}

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  const auto sections = parse_ini(manifest_path);
  const auto base = manifest_path.parent_path();
  MultiViewDataset d;
  for (const IniSection& sec : sections) {
    if (sec.name.rfind("view.", 0) != 0)
      throw std::runtime_error(manifest_path.string() + ": unexpected section [" + sec.name + "]");
    for (const auto& [k, v] : sec.entries)
      if (k != "edges" && k != "attributes")
        throw std::runtime_error(manifest_path.string() + ": unknown key '" + k + "' in [" +
                                 sec.name + "]");
    const std::string* edges = sec.find("edges");
    const std::string* attrs = sec.find("attributes");
    if (!edges || !attrs)
      throw std::runtime_error(manifest_path.string() + ": section [" + sec.name +
                               "] needs 'edges' and 'attributes'");
    View view;
    view.name = sec.name.substr(5);
    auto [names, x] = load_attributes(base / *attrs);
    view.attributes = std::move(x);
    view.graph = load_edge_list(base / *edges, names);
    d.views.push_back(std::move(view));
  }
  if (d.views.empty()) throw std::runtime_error(manifest_path.string() + ": no views");
  d.sample_dim = d.views.front().attributes.cols();
  return d;
}

void save_dataset(const std::filesystem::path& dir, const MultiViewDataset& d,
                  const std::string& manifest_name) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / manifest_name);
  if (!manifest) throw std::runtime_error("cannot write " + (dir / manifest_name).string());
  for (const View& v : d.views) {
    const std::string edges_file = v.name + "_edges.tsv";
    const std::string attrs_file = v.name + "_attributes.tsv";
    save_edge_list(dir / edges_file, v.graph);
    save_attributes(dir / attrs_file, v.graph.node_names, v.attributes);
    manifest << "[view." << v.name << "]\n";
    manifest << "edges = " << edges_file << '\n';
    manifest << "attributes = " << attrs_file << "\n\n";
  }
}

}  // namespace bayrel
