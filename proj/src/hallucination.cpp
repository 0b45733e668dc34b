#include "multipivot/metrics.hpp"

#include <map>

namespace multipivot::metrics {

  namespace {

    template <typename T>
    std::size_t top_count(std::span<const T> seq, std::size_t n) {
      if (n == 0 || seq.size() < n)
        return 0;
      auto less = [](std::span<const T> a, std::span<const T> b) {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
      };
      std::map<std::span<const T>, std::size_t, decltype(less)> counts(less);
      std::size_t top = 0;
      for (std::size_t i = 0; i + n <= seq.size(); ++i)
        top = std::max(top, ++counts[seq.subspan(i, n)]);
      return top;
    }

    template <typename T>
    bool flag(std::span<const T> src, std::span<const T> hyp, const TngParams& params) {
      params.validate();
      const auto n = static_cast<std::size_t>(params.n);
      const auto hyp_top = static_cast<long long>(top_count(hyp, n));
      const auto src_top = static_cast<long long>(top_count(src, n));
      return hyp_top - src_top >= params.t;
    }

  }

  void TngParams::validate() const {
    if (n < 1)
      throw InvalidArgument("TNG n must be >= 1");
    if (t < 1)
      throw InvalidArgument("TNG t must be >= 1");
  }

  std::size_t top_ngram_count(std::span<const std::string> seq, std::size_t n) {
    return top_count(seq, n);
  }

  std::size_t top_ngram_count(std::span<const TokenId> seq, std::size_t n) {
    return top_count(seq, n);
  }

  bool tng_flag(std::span<const std::string> src,
                std::span<const std::string> hyp,
                const TngParams& params) {
    return flag(src, hyp, params);
  }

  bool tng_flag(std::span<const TokenId> src, std::span<const TokenId> hyp, const TngParams& params) {
    return flag(src, hyp, params);
  }

  double tng_hallucination_rate(std::span<const Words> srcs,
                                std::span<const Words> hyps,
                                const TngParams& params) {
    if (srcs.size() != hyps.size())
      throw InvalidArgument("source and hypothesis counts differ");
    if (hyps.empty())
      throw InvalidArgument("hallucination rate of an empty set");
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      if (tng_flag(srcs[i], hyps[i], params))
        ++flagged;
    }
    return 100.0 * static_cast<double>(flagged) / static_cast<double>(hyps.size());
  }

}
