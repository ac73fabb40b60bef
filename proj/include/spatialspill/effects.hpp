#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spatialspill/estimators.hpp"
#include "spatialspill/weights.hpp"

namespace spatialspill {

struct EffectEstimate {
  double point = 0.0;
  double mean = 0.0;  // Monte-Carlo mean (== point when draws == 0)
  double sd = 0.0;
  double t = 0.0;
  double p = 1.0;
};

struct EffectsRow {
  std::string regressor;
  EffectEstimate direct;
  EffectEstimate indirect;
  EffectEstimate total;
};

/// Direct/indirect/total marginal effects per regressor from the reduced
/// form S_k(W) = (I - rho W)^{-1}(beta_k I + theta_k W), with
/// simulation-based inference over Gaussian parameter draws.
struct EffectsTable {
  std::vector<EffectsRow> rows;
  int draws = 0;
  uint64_t seed = 0;
  int rejected_draws = 0;

  const EffectsRow& row(const std::string& regressor) const;
};

EffectsTable decompose_effects(const FitResult& fit, const WeightsMatrix& w,
                               int draws = 0, uint64_t seed = 0, int threads = 1);

}  // namespace spatialspill
