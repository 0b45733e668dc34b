#pragma once

#include <span>

#include "multipivot/core.hpp"

// Per-step combination of the K next-token distributions obtained by
// conditioning the same target prefix on different sources.
//
//   direct    single source, distribution used as is
//   multiavg  log of the arithmetic mean of probabilities
//   maxens    max over sources of the log-probability (not a distribution)
//   logavg    arithmetic mean of log-probabilities (geometric mean)
//
// For any input, maxens >= multiavg >= logavg holds token by token.
namespace multipivot {

  struct CombineOptions {
    bool renormalize_maxens = false;
  };

  CombinedStep combine_direct(std::span<const StepDistribution> dists);
  CombinedStep combine_multiavg(std::span<const StepDistribution> dists);
  CombinedStep combine_maxens(std::span<const StepDistribution> dists, bool renormalize = false);
  CombinedStep combine_logavg(std::span<const StepDistribution> dists);

  CombinedStep combine(Combiner combiner,
                       std::span<const StepDistribution> dists,
                       const CombineOptions& options = {});

}
