#pragma once

#include <string>
#include <vector>

#include "bayrel/training.hpp"

namespace bayrel {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t elements = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double tolerance = 0.0;
  bool pass = false;

  double worst() const;
};

// Central finite differences against the taped gradient of the full
// objective, with the stochastic draws frozen by re-seeding. Relative
// error uses |a - b| / max(|a|, |b|); when both gradients are below
// 1e-6 an absolute bound of 1e-7 applies instead. corrupt_element >= 0
// perturbs one analytic gradient entry (flat index across parameters) to
// prove the checker catches wrong gradients.
GradCheckReport gradient_check(BayRelModel& m, const MultiViewDataset& d, const TrainConfig& cfg,
                               std::uint64_t noise_seed, double h = 1e-4, double tol = 1e-4,
                               long corrupt_element = -1);

// Re-draws every parameter from a centered uniform so no gradient sits at
// a symmetric zero; used before checking a freshly built model.
void randomize_params(BayRelModel& m, std::uint64_t seed, double scale = 0.5);

}  // namespace bayrel
