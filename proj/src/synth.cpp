#include "bayrel/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "bayrel/manifest.hpp"

namespace bayrel {

void SynthConfig::check() const {
  if (view_sizes.size() != 2) throw std::invalid_argument("synth: exactly two views supported");
  if (view_sizes[0] == 0 || view_sizes[1] == 0)
    throw std::invalid_argument("synth: views must be non-empty");
  if (samples < 2) throw std::invalid_argument("synth: need at least two samples");
  if (communities == 0 || communities > std::min(view_sizes[0], view_sizes[1]))
    throw std::invalid_argument("synth: communities must fit in both views");
  if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0))
    throw std::invalid_argument("synth: probabilities must lie in [0, 1]");
  if (!(p_in > p_out)) throw std::invalid_argument("synth: p_in must exceed p_out");
  if (planted_edges > view_sizes[0] * view_sizes[1])
    throw std::invalid_argument("synth: more planted edges than node pairs");
  if (!(signal >= 0.0 && signal <= 1.0))
    throw std::invalid_argument("synth: signal must lie in [0, 1]");
  if (!(noise >= 0.0)) throw std::invalid_argument("synth: noise must be non-negative");
}

std::size_t community_of(std::size_t node, std::size_t n_nodes, std::size_t communities) {
  const std::size_t c = node * communities / n_nodes;
  return c < communities ? c : communities - 1;
}

namespace {

ViewGraph sbm_graph(std::size_t n, std::size_t communities, double p_in, double p_out,
                    const std::string& name_prefix, Rng& rng) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) names.push_back(name_prefix + "_" + std::to_string(i));
  ViewGraph g(n, std::move(names));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same =
          community_of(i, n, communities) == community_of(j, n, communities);
      if (rng.bernoulli(same ? p_in : p_out)) g.add_edge(i, j);
    }
  return g;
}

void standardize_rows(Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double sd = std::sqrt(var);
    if (sd < 1e-12) continue;  // constant row, leave untouched
    for (std::size_t j = 0; j < d; ++j) x(i, j) = (x(i, j) - mean) / sd;
  }
}

}  // namespace

std::pair<MultiViewDataset, PlantedTruth> generate(const SynthConfig& cfg, Rng& rng) {
  cfg.check();
  const std::size_t n1 = cfg.view_sizes[0], n2 = cfg.view_sizes[1], d = cfg.samples;
  const std::size_t c = cfg.communities;

  MultiViewDataset ds;
  ds.sample_dim = d;
  ds.views.resize(2);
  ds.views[0].name = "view1";
  ds.views[0].graph = sbm_graph(n1, c, cfg.p_in, cfg.p_out, "view1", rng);
  ds.views[1].name = "view2";
  ds.views[1].graph = sbm_graph(n2, c, cfg.p_in, cfg.p_out, "view2", rng);

  // one shared profile per matched community pair
  std::vector<Tensor> profiles;
  profiles.reserve(c);
  for (std::size_t k = 0; k < c; ++k)
    profiles.push_back(rng.sample(RandomKind::standard_gaussian, {d}));

  // planted pairs between matched communities
  std::vector<std::vector<std::size_t>> members1(c), members2(c);
  for (std::size_t i = 0; i < n1; ++i) members1[community_of(i, n1, c)].push_back(i);
  for (std::size_t j = 0; j < n2; ++j) members2[community_of(j, n2, c)].push_back(j);

  PlantedTruth truth;
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * cfg.planted_edges + 1000;
  while (chosen.size() < cfg.planted_edges) {
    if (++attempts > max_attempts)
      throw std::runtime_error("synth: could not place the requested planted pairs");
    const std::size_t k = rng.below(c);
    if (members1[k].empty() || members2[k].empty()) continue;
    const std::size_t i = members1[k][rng.below(members1[k].size())];
    const std::size_t j = members2[k][rng.below(members2[k].size())];
    if (chosen.insert({i, j}).second) truth.pairs.emplace_back(i, j);
  }

  // attribute rows: planted nodes follow their community profile,
  // unplanted nodes get an independent one
  std::vector<bool> planted1(n1, false), planted2(n2, false);
  for (const auto& [i, j] : truth.pairs) {
    planted1[i] = true;
    planted2[j] = true;
  }
  for (int view = 0; view < 2; ++view) {
    const std::size_t n = view == 0 ? n1 : n2;
    const std::vector<bool>& planted = view == 0 ? planted1 : planted2;
    Tensor x = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      Tensor own;
      const Tensor* profile;
      if (planted[i]) {
        profile = &profiles[community_of(i, n, c)];
      } else {
        own = rng.sample(RandomKind::standard_gaussian, {d});
        profile = &own;
      }
      for (std::size_t j = 0; j < d; ++j)
        x(i, j) = cfg.signal * (*profile)[j] + cfg.noise * rng.gaussian();
    }
    standardize_rows(x);
    ds.views[view].attributes = std::move(x);
  }
  return {std::move(ds), std::move(truth)};
}

std::pair<MultiViewDataset, PlantedTruth> easy_fixture() {
  SynthConfig cfg;
  Rng rng(cfg.seed);
  return generate(cfg, rng);
}

std::pair<MultiViewDataset, PlantedTruth> two_view_fixture() {
  SynthConfig cfg;
  cfg.view_sizes = {5, 4};
  cfg.samples = 6;
  cfg.communities = 2;
  cfg.p_in = 0.6;
  cfg.p_out = 0.2;
  cfg.planted_edges = 4;
  cfg.signal = 0.8;
  cfg.noise = 0.5;
  cfg.seed = 3;
  Rng rng(cfg.seed);
  return generate(cfg, rng);
}

void write_truth_tsv(const std::filesystem::path& path, const PlantedTruth& truth,
                     const MultiViewDataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [i, j] : truth.pairs)
    out << d.views[0].graph.node_names[i] << '\t' << d.views[1].graph.node_names[j] << '\n';
}

PlantedTruth load_truth_tsv(const std::filesystem::path& path, const MultiViewDataset& d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file " + path.string());
  std::unordered_map<std::string, std::size_t> idx1, idx2;
  for (std::size_t i = 0; i < d.views[0].graph.node_names.size(); ++i)
    idx1[d.views[0].graph.node_names[i]] = i;
  for (std::size_t j = 0; j < d.views[1].graph.node_names.size(); ++j)
    idx2[d.views[1].graph.node_names[j]] = j;
  PlantedTruth truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error(where + ": expected name<TAB>name");
    const std::string a = trim(line.substr(0, tab));
    const std::string b = trim(line.substr(tab + 1));
    const auto ia = idx1.find(a);
    if (ia == idx1.end()) throw std::runtime_error(where + ": unknown view-1 node '" + a + "'");
    const auto ib = idx2.find(b);
    if (ib == idx2.end()) throw std::runtime_error(where + ": unknown view-2 node '" + b + "'");
    truth.pairs.emplace_back(ia->second, ib->second);
  }
  return truth;
}

}  // namespace bayrel
