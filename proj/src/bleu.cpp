#include "multipivot/metrics.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace multipivot::metrics {

  namespace {

    struct SpanLess {
      template <typename T>
      bool operator()(std::span<const T> a, std::span<const T> b) const {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
      }
    };

    template <typename T>
    std::map<std::span<const T>, std::int64_t, SpanLess> count_ngrams(std::span<const T> seq,
                                                                      std::size_t n) {
      std::map<std::span<const T>, std::int64_t, SpanLess> counts;
      for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++counts[seq.subspan(i, n)];
      return counts;
    }

    template <typename T>
    BleuStats compute_stats(std::span<const T> hyp, std::span<const T> ref) {
      if (ref.empty())
        throw InvalidArgument("BLEU reference is empty");
      BleuStats stats;
      stats.hyp_len = static_cast<std::int64_t>(hyp.size());
      stats.ref_len = static_cast<std::int64_t>(ref.size());
      for (std::size_t n = 1; n <= kBleuOrder; ++n) {
        if (hyp.size() < n)
          break;
        const auto hyp_counts = count_ngrams(hyp, n);
        const auto ref_counts = count_ngrams(ref, n);
        std::int64_t matches = 0;
        for (const auto& [gram, count] : hyp_counts) {
          auto it = ref_counts.find(gram);
          if (it != ref_counts.end())
            matches += std::min(count, it->second);
        }
        stats.matches[n - 1] = matches;
        stats.totals[n - 1] = static_cast<std::int64_t>(hyp.size() - n + 1);
      }
      return stats;
    }

    template <typename Seq>
    double corpus_bleu(std::span<const Seq> hyps, std::span<const Seq> refs) {
      if (hyps.size() != refs.size())
        throw InvalidArgument("BLEU got " + std::to_string(hyps.size()) + " hypotheses for "
                              + std::to_string(refs.size()) + " references");
      if (hyps.empty())
        throw InvalidArgument("BLEU of an empty corpus");
      BleuStats total;
      for (std::size_t i = 0; i < hyps.size(); ++i)
        total += bleu_stats(hyps[i], refs[i]);
      return bleu_from_stats(total);
    }

  }

  BleuStats& BleuStats::operator+=(const BleuStats& other) {
    hyp_len += other.hyp_len;
    ref_len += other.ref_len;
    for (int n = 0; n < kBleuOrder; ++n) {
      matches[n] += other.matches[n];
      totals[n] += other.totals[n];
    }
    return *this;
  }

  BleuStats bleu_stats(std::span<const std::string> hyp, std::span<const std::string> ref) {
    return compute_stats(hyp, ref);
  }

  BleuStats bleu_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
    return compute_stats(hyp, ref);
  }

  double bleu_from_stats(const BleuStats& stats) {
    if (stats.hyp_len == 0)
      return 0;
    double smooth = 1;
    double log_sum = 0;
    for (int n = 0; n < kBleuOrder; ++n) {
      // No n-grams of this order at all: the geometric mean is zero.
      if (stats.totals[n] == 0)
        return 0;
      double precision;
      if (stats.matches[n] == 0) {
        smooth *= 2;
        precision = 1.0 / (smooth * static_cast<double>(stats.totals[n]));
      } else {
        precision = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
      }
      log_sum += std::log(precision);
    }
    const double ratio = static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len);
    const double brevity = std::exp(std::min(0.0, 1.0 - ratio));
    return 100.0 * brevity * std::exp(log_sum / kBleuOrder);
  }

  double bleu(std::span<const Words> hyps, std::span<const Words> refs) {
    return corpus_bleu(hyps, refs);
  }

  double bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs) {
    return corpus_bleu(hyps, refs);
  }

  Words tokenize(std::string_view text) {
    Words words;
    std::istringstream stream{std::string(text)};
    std::string word;
    while (stream >> word)
      words.push_back(std::move(word));
    return words;
  }

  double corpus_bleu_text(std::span<const std::string> hyps, std::span<const std::string> refs) {
    std::vector<Words> hyp_words, ref_words;
    hyp_words.reserve(hyps.size());
    ref_words.reserve(refs.size());
    for (const auto& h : hyps)
      hyp_words.push_back(tokenize(h));
    for (const auto& r : refs)
      ref_words.push_back(tokenize(r));
    return bleu(std::span<const Words>(hyp_words), std::span<const Words>(ref_words));
  }

}
