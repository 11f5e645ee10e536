#include "bayrel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "bayrel/manifest.hpp"

namespace bayrel {

namespace {

double clip_prob(double p) { return std::min(std::max(p, kProbClip), 1.0 - kProbClip); }

}  // namespace

BipartiteProbs infer_bipartite(BayRelModel& m, const MultiViewDataset& d, std::size_t view_row,
                               std::size_t view_col, std::size_t num_samples, Rng& rng) {
  if (view_row >= d.views.size() || view_col >= d.views.size() || view_row == view_col)
    throw std::invalid_argument("infer: bad view pair (" + std::to_string(view_row) + ", " +
                                std::to_string(view_col) + ")");
  Tape t;
  std::vector<std::size_t> idx = {view_row, view_col};
  Var mu[2], logsig[2];
  for (int k = 0; k < 2; ++k) {
    const View& view = d.views[idx[k]];
    Var a_hat = t.leaf(normalize_adjacency(view.graph));
    std::tie(mu[k], logsig[k]) = m.encoder.encode(t, a_hat, t.leaf(view.attributes));
  }
  Tensor acc;
  if (num_samples == 0) {
    acc = t.value(m.link.probs(t, mu[0], mu[1]));
  } else {
    for (std::size_t s = 0; s < num_samples; ++s) {
      Var u0 = reparameterize(
          t, mu[0], logsig[0],
          t.leaf(rng.sample(RandomKind::standard_gaussian, t.value(mu[0]).shape)));
      Var u1 = reparameterize(
          t, mu[1], logsig[1],
          t.leaf(rng.sample(RandomKind::standard_gaussian, t.value(mu[1]).shape)));
      const Tensor& p = t.value(m.link.probs(t, u0, u1));
      if (s == 0)
        acc = p;
      else
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
    for (double& v : acc.data) v /= static_cast<double>(num_samples);
  }
  BipartiteProbs out;
  out.view_row = d.views[view_row].name;
  out.view_col = d.views[view_col].name;
  out.row_names = d.views[view_row].graph.node_names;
  out.col_names = d.views[view_col].graph.node_names;
  out.matrix = std::move(acc);
  return out;
}

Tensor threshold_by_density(const Tensor& probs, double target_density) {
  if (!(target_density > 0.0 && target_density <= 1.0))
    throw std::invalid_argument("threshold: density must lie in (0, 1]");
  const std::size_t total = probs.size();
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(target_density * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&probs](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;  // flat index order == (row, column) lexicographic
  });
  Tensor out = Tensor::zeros(probs.shape);
  for (std::size_t k = 0; k < keep && k < total; ++k) out[order[k]] = 1.0;
  return out;
}

double positive_accuracy(const Tensor& binary, std::size_t anchor_row,
                         const std::vector<std::size_t>& validated_cols) {
  if (validated_cols.empty()) throw std::invalid_argument("positive accuracy: empty validated set");
  if (anchor_row >= binary.rows()) throw std::out_of_range("positive accuracy: anchor out of range");
  std::size_t hit = 0;
  for (std::size_t c : validated_cols) {
    if (c >= binary.cols()) throw std::out_of_range("positive accuracy: column out of range");
    if (binary(anchor_row, c) != 0.0) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(validated_cols.size());
}

double negative_accuracy(const Tensor& binary, const std::vector<std::size_t>& s1_cols,
                         const std::vector<std::size_t>& s2_cols,
                         const std::vector<std::size_t>& t_rows) {
  if (s1_cols.empty() || s2_cols.empty() || t_rows.empty())
    throw std::invalid_argument("negative accuracy: empty set");
  std::size_t fired = 0;
  for (std::size_t i : s1_cols)
    for (std::size_t j : s2_cols)
      for (std::size_t k : t_rows) {
        if (i >= binary.cols() || j >= binary.cols() || k >= binary.rows())
          throw std::out_of_range("negative accuracy: index out of range");
        if (binary(k, i) != 0.0 && binary(k, j) != 0.0) ++fired;
      }
  const double denom = static_cast<double>(s1_cols.size()) * static_cast<double>(s2_cols.size()) *
                       static_cast<double>(t_rows.size());
  return 1.0 - static_cast<double>(fired) / denom;
}

double prediction_sensitivity(const Tensor& binary,
                              const std::vector<std::pair<std::size_t, std::size_t>>& validated) {
  if (validated.empty()) throw std::invalid_argument("sensitivity: empty validated set");
  std::size_t hit = 0;
  for (const auto& [i, j] : validated) {
    if (i >= binary.rows() || j >= binary.cols())
      throw std::out_of_range("sensitivity: pair out of range");
    if (binary(i, j) != 0.0) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(validated.size());
}

double bipartite_kl(const Tensor& p1, const Tensor& p2) {
  if (!p1.same_shape(p2))
    throw std::invalid_argument("bipartite kl: shapes differ, " + shape_str(p1.shape) + " vs " +
                                shape_str(p2.shape));
  double s = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const double a = clip_prob(p1[i]);
    const double b = clip_prob(p2[i]);
    s += a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  }
  return s / static_cast<double>(p1.size());
}

double roc_auc(const Tensor& scores, const Tensor& truth) {
  if (!scores.same_shape(truth)) throw std::invalid_argument("auc: shapes differ");
  // midrank formulation of the Mann-Whitney statistic
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) (truth[i] != 0.0 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: truth needs at least one positive and one negative");
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (truth[order[k]] != 0.0) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ValidationSet load_validation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open validation set " + path.string());
  ValidationSet vs;
  std::string line;
  std::size_t lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (first_content && line.rfind("anchor:", 0) == 0) {
      vs.anchor = trim(line.substr(7));
      if (vs.anchor->empty()) throw std::runtime_error(where + ": empty anchor name");
      first_content = false;
      continue;
    }
    first_content = false;
    const std::size_t tab = line.find('\t');
    if (vs.anchor) {
      if (tab != std::string::npos)
        throw std::runtime_error(where + ": anchor format expects one target per line");
      vs.edges.emplace_back(*vs.anchor, line);
    } else {
      if (tab == std::string::npos)
        throw std::runtime_error(where + ": expected name_v<TAB>name_w");
      vs.edges.emplace_back(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
  }
  if (vs.edges.empty()) throw std::runtime_error(path.string() + ": no validated pairs");
  return vs;
}

void write_edges_tsv(const std::filesystem::path& path, const BipartiteProbs& probs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  struct Row {
    double p;
    std::size_t i, j;
  };
  std::vector<Row> rows;
  rows.reserve(probs.matrix.size());
  for (std::size_t i = 0; i < probs.matrix.rows(); ++i)
    for (std::size_t j = 0; j < probs.matrix.cols(); ++j) rows.push_back({probs.matrix(i, j), i, j});
  std::sort(rows.begin(), rows.end(), [&probs](const Row& a, const Row& b) {
    if (a.p != b.p) return a.p > b.p;
    const auto& an = probs.row_names[a.i];
    const auto& bn = probs.row_names[b.i];
    if (an != bn) return an < bn;
    return probs.col_names[a.j] < probs.col_names[b.j];
  });
  char buf[32];
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.p);
    out << probs.row_names[r.i] << '\t' << probs.col_names[r.j] << '\t' << buf << '\n';
  }
}

BipartiteProbs read_edges_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge file " + path.string());
  std::map<std::string, std::size_t> row_index, col_index;
  std::vector<std::string> row_names, col_names;
  struct Entry {
    std::size_t i, j;
    double p;
  };
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error(where + ": expected name<TAB>name<TAB>probability");
    const std::string a = trim(line.substr(0, t1));
    const std::string b = trim(line.substr(t1 + 1, t2 - t1 - 1));
    const double p = parse_double(trim(line.substr(t2 + 1)), where);
    auto [ra, inserted_a] = row_index.try_emplace(a, row_names.size());
    if (inserted_a) row_names.push_back(a);
    auto [cb, inserted_b] = col_index.try_emplace(b, col_names.size());
    if (inserted_b) col_names.push_back(b);
    entries.push_back({ra->second, cb->second, p});
  }
  if (entries.empty()) throw std::runtime_error(path.string() + ": no edges");
  if (entries.size() != row_names.size() * col_names.size())
    throw std::runtime_error(path.string() + ": expected the full " +
                             std::to_string(row_names.size()) + "x" +
                             std::to_string(col_names.size()) + " grid, got " +
                             std::to_string(entries.size()) + " rows");
  BipartiteProbs out;
  out.row_names = std::move(row_names);
  out.col_names = std::move(col_names);
  out.matrix = Tensor::zeros({out.row_names.size(), out.col_names.size()});
  std::vector<bool> seen(out.matrix.size(), false);
  for (const Entry& e : entries) {
    const std::size_t flat = e.i * out.col_names.size() + e.j;
    if (seen[flat])
      throw std::runtime_error(path.string() + ": duplicate pair " + out.row_names[e.i] + ", " +
                               out.col_names[e.j]);
    seen[flat] = true;
    out.matrix[flat] = e.p;
  }
  return out;
}

}  // namespace bayrel
