#include "multipivot/metrics.hpp"

#include <numeric>

#include "multipivot/random.hpp"

namespace multipivot::metrics {

  void BootstrapParams::validate() const {
    if (resamples < 100)
      throw InvalidArgument("paired bootstrap needs at least 100 resamples");
    if (!(alpha > 0 && alpha < 1))
      throw InvalidArgument("alpha must lie in (0, 1)");
  }

  std::string_view to_string(Winner winner) {
    switch (winner) {
    case Winner::a:
      return "a";
    case Winner::b:
      return "b";
    case Winner::tie:
      return "tie";
    }
    return "tie";
  }

  BootstrapResult paired_bootstrap(std::size_t corpus_size,
                                   const IndexedMetric& metric_a,
                                   const IndexedMetric& metric_b,
                                   const BootstrapParams& params,
                                   bool higher_is_better) {
    params.validate();
    if (corpus_size == 0)
      throw InvalidArgument("paired bootstrap on an empty corpus");

    std::vector<std::size_t> indices(corpus_size);
    std::iota(indices.begin(), indices.end(), 0);

    BootstrapResult result;
    result.score_a = metric_a(indices);
    result.score_b = metric_b(indices);
    if (result.score_a == result.score_b)
      return result;

    const bool a_better = higher_is_better ? result.score_a > result.score_b
                                           : result.score_a < result.score_b;
    result.winner = a_better ? Winner::a : Winner::b;
    const IndexedMetric& winner = a_better ? metric_a : metric_b;
    const IndexedMetric& loser = a_better ? metric_b : metric_a;

    RandomStream rng(params.seed);
    std::size_t loser_holds = 0;
    for (std::size_t r = 0; r < params.resamples; ++r) {
      for (auto& index : indices)
        index = static_cast<std::size_t>(rng.below(corpus_size));
      const double w = winner(indices);
      const double l = loser(indices);
      if (higher_is_better ? l >= w : l <= w)
        ++loser_holds;
    }
    result.p_value = static_cast<double>(loser_holds) / static_cast<double>(params.resamples);
    result.significant = result.p_value < params.alpha;
    return result;
  }

  BootstrapResult paired_bootstrap(const CorpusMetric& metric,
                                   std::span<const std::string> sys_a,
                                   std::span<const std::string> sys_b,
                                   std::span<const std::string> refs,
                                   const BootstrapParams& params,
                                   bool higher_is_better) {
    if (sys_a.size() != refs.size() || sys_b.size() != refs.size())
      throw InvalidArgument("paired bootstrap needs aligned system outputs and references");

    auto resampled = [&](std::span<const std::string> outputs) {
      return [&metric, outputs, refs](std::span<const std::size_t> indices) {
        std::vector<std::string> hyps, sample_refs;
        hyps.reserve(indices.size());
        sample_refs.reserve(indices.size());
        for (const auto i : indices) {
          hyps.push_back(outputs[i]);
          sample_refs.push_back(refs[i]);
        }
        return metric(hyps, sample_refs);
      };
    };
    return paired_bootstrap(refs.size(), resampled(sys_a), resampled(sys_b), params,
                            higher_is_better);
  }

  BootstrapResult paired_bootstrap_bleu(std::span<const BleuStats> sys_a,
                                        std::span<const BleuStats> sys_b,
                                        const BootstrapParams& params) {
    if (sys_a.size() != sys_b.size())
      throw InvalidArgument("paired bootstrap needs aligned system outputs");
    auto summed = [](std::span<const BleuStats> stats) {
      return [stats](std::span<const std::size_t> indices) {
        BleuStats total;
        for (const auto i : indices)
          total += stats[i];
        return bleu_from_stats(total);
      };
    };
    return paired_bootstrap(sys_a.size(), summed(sys_a), summed(sys_b), params);
  }

}
