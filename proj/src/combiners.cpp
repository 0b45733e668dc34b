#include "multipivot/combiners.hpp"

#include <cmath>

namespace multipivot {

  static std::size_t check_same_vocab(std::span<const StepDistribution> dists) {
    if (dists.empty())
      throw InvalidArgument("combiner needs at least one distribution");
    const std::size_t size = dists.front().size();
    for (std::size_t k = 1; k < dists.size(); ++k) {
      if (dists[k].size() != size)
        throw InvalidArgument("distribution " + std::to_string(k) + " has "
                              + std::to_string(dists[k].size()) + " entries, expected "
                              + std::to_string(size));
    }
    return size;
  }

  CombinedStep combine_direct(std::span<const StepDistribution> dists) {
    if (dists.size() != 1)
      throw InvalidArgument("direct scoring takes exactly one source, got "
                            + std::to_string(dists.size()));
    const auto lp = dists.front().logprobs();
    return CombinedStep{{lp.begin(), lp.end()}, true, {}};
  }

  CombinedStep combine_multiavg(std::span<const StepDistribution> dists) {
    const std::size_t vocab = check_same_vocab(dists);
    const double num_sources = static_cast<double>(dists.size());
    CombinedStep out{std::vector<double>(vocab), true, {}};

    for (std::size_t y = 0; y < vocab; ++y) {
      double max_lp = kNegInf;
      for (const auto& d : dists)
        max_lp = std::max(max_lp, d[y]);
      if (max_lp == kNegInf) {
        out.logscores[y] = kNegInf;
        continue;
      }
      // sum <= K, so log(sum / K) <= 0 and the result never exceeds the max.
      double sum = 0;
      for (const auto& d : dists)
        sum += std::exp(d[y] - max_lp);
      out.logscores[y] = max_lp + std::log(sum / num_sources);
    }
    return out;
  }

  CombinedStep combine_maxens(std::span<const StepDistribution> dists, bool renormalize) {
    const std::size_t vocab = check_same_vocab(dists);
    CombinedStep out{std::vector<double>(vocab), false, std::vector<int>(vocab, 0)};

    for (std::size_t y = 0; y < vocab; ++y) {
      double best = dists[0][y];
      int best_k = 0;
      for (std::size_t k = 1; k < dists.size(); ++k) {
        // Strict comparison keeps the lowest index on ties.
        if (dists[k][y] > best) {
          best = dists[k][y];
          best_k = static_cast<int>(k);
        }
      }
      out.logscores[y] = best;
      out.provenance[y] = best_k;
    }

    if (renormalize) {
      const double lse = log_sum_exp(out.logscores);
      for (double& v : out.logscores)
        v -= lse;
      out.normalized = true;
    }
    return out;
  }

  CombinedStep combine_logavg(std::span<const StepDistribution> dists) {
    const std::size_t vocab = check_same_vocab(dists);
    const double num_sources = static_cast<double>(dists.size());
    CombinedStep out{std::vector<double>(vocab), false, {}};

    for (std::size_t y = 0; y < vocab; ++y) {
      double max_lp = kNegInf;
      for (const auto& d : dists)
        max_lp = std::max(max_lp, d[y]);
      if (max_lp == kNegInf) {
        out.logscores[y] = kNegInf;
        continue;
      }
      // Offsets from the max are <= 0, so identical inputs reproduce exactly.
      double offset_sum = 0;
      for (const auto& d : dists)
        offset_sum += d[y] - max_lp;
      out.logscores[y] = max_lp + offset_sum / num_sources;
    }
    return out;
  }

  CombinedStep combine(Combiner combiner,
                       std::span<const StepDistribution> dists,
                       const CombineOptions& options) {
    switch (combiner) {
    case Combiner::direct:
      return combine_direct(dists);
    case Combiner::multiavg:
      return combine_multiavg(dists);
    case Combiner::maxens:
      return combine_maxens(dists, options.renormalize_maxens);
    case Combiner::logavg:
      return combine_logavg(dists);
    }
    throw InvalidArgument("unknown combiner");
  }

}
