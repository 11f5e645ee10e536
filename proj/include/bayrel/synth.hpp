#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "bayrel/graph.hpp"
#include "bayrel/random.hpp"

namespace bayrel {

// Planted two-view generator: a stochastic block model per view,
// community-matched cross-view pairs, and attribute rows built from
// shared community profiles so planted partners correlate.
struct SynthConfig {
  std::vector<std::size_t> view_sizes{60, 40};
  std::size_t samples = 80;      // D
  std::size_t communities = 4;   // per view
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t planted_edges = 60;
  double signal = 0.9;   // s in [0, 1]
  double noise = 0.3;
  std::uint64_t seed = 7;

  void check() const;
};

struct PlantedTruth {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (view-1 node, view-2 node)
};

std::size_t community_of(std::size_t node, std::size_t n_nodes, std::size_t communities);

std::pair<MultiViewDataset, PlantedTruth> generate(const SynthConfig& cfg, Rng& rng);

// The canonical recovery instance: defaults above with seed 7.
std::pair<MultiViewDataset, PlantedTruth> easy_fixture();

// Tiny instance (N = 5, 4; D = 6) for gradient checks.
std::pair<MultiViewDataset, PlantedTruth> two_view_fixture();

void write_truth_tsv(const std::filesystem::path& path, const PlantedTruth& truth,
                     const MultiViewDataset& d);
PlantedTruth load_truth_tsv(const std::filesystem::path& path, const MultiViewDataset& d);

}  // namespace bayrel
