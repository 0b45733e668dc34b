#include "multipivot/metrics.hpp"

#include <unordered_map>

namespace multipivot::metrics {

  namespace {

    // Lenient UTF-8 decoding: malformed bytes map to U+FFFD.
    std::u32string decode_utf8(std::string_view text) {
      constexpr char32_t replacement = 0xFFFD;
      std::u32string out;
      out.reserve(text.size());
      std::size_t i = 0;
      while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t extra = 0;
        char32_t cp = 0;
        if (lead < 0x80) {
          cp = lead;
        } else if ((lead & 0xE0) == 0xC0) {
          cp = lead & 0x1F;
          extra = 1;
        } else if ((lead & 0xF0) == 0xE0) {
          cp = lead & 0x0F;
          extra = 2;
        } else if ((lead & 0xF8) == 0xF0) {
          cp = lead & 0x07;
          extra = 3;
        } else {
          out.push_back(replacement);
          ++i;
          continue;
        }
        bool ok = i + extra < text.size();
        for (std::size_t k = 1; ok && k <= extra; ++k) {
          const auto c = static_cast<unsigned char>(text[i + k]);
          if ((c & 0xC0) != 0x80)
            ok = false;
          else
            cp = (cp << 6) | (c & 0x3F);
        }
        if (!ok) {
          out.push_back(replacement);
          ++i;
          continue;
        }
        out.push_back(cp);
        i += extra + 1;
      }
      return out;
    }

    // Unicode White_Space property.
    bool is_space(char32_t c) {
      if (c >= 0x09 && c <= 0x0D)
        return true;
      if (c >= 0x2000 && c <= 0x200A)
        return true;
      switch (c) {
      case 0x20:
      case 0x85:
      case 0xA0:
      case 0x1680:
      case 0x2028:
      case 0x2029:
      case 0x202F:
      case 0x205F:
      case 0x3000:
        return true;
      default:
        return false;
      }
    }

    std::u32string prepare(std::string_view text, bool strip_whitespace) {
      std::u32string chars = decode_utf8(text);
      if (strip_whitespace)
        std::erase_if(chars, is_space);
      return chars;
    }

    struct U32Hash {
      std::size_t operator()(std::u32string_view s) const {
        return std::hash<std::u32string_view>{}(s);
      }
    };

    using NgramCounts = std::unordered_map<std::u32string_view, std::int64_t, U32Hash>;

    NgramCounts count_ngrams(std::u32string_view chars, std::size_t n) {
      NgramCounts counts;
      if (chars.size() < n)
        return counts;
      for (std::size_t i = 0; i + n <= chars.size(); ++i)
        ++counts[chars.substr(i, n)];
      return counts;
    }

  }

  void ChrfParams::validate() const {
    if (char_order < 1)
      throw InvalidArgument("chrF char_order must be >= 1");
    if (!(beta > 0))
      throw InvalidArgument("chrF beta must be > 0");
  }

  ChrfStats& ChrfStats::operator+=(const ChrfStats& other) {
    if (orders.empty())
      orders.resize(other.orders.size());
    if (orders.size() != other.orders.size())
      throw InvalidArgument("cannot add chrF statistics of different orders");
    for (std::size_t n = 0; n < orders.size(); ++n) {
      for (std::size_t k = 0; k < 3; ++k)
        orders[n][k] += other.orders[n][k];
    }
    return *this;
  }

  ChrfStats chrf_stats(std::string_view hyp, std::string_view ref, const ChrfParams& params) {
    params.validate();
    const std::u32string hyp_chars = prepare(hyp, params.strip_whitespace);
    const std::u32string ref_chars = prepare(ref, params.strip_whitespace);
    if (ref_chars.empty())
      throw InvalidArgument("chrF reference is empty");

    ChrfStats stats;
    stats.orders.resize(static_cast<std::size_t>(params.char_order));
    for (std::size_t n = 1; n <= stats.orders.size(); ++n) {
      const auto hyp_counts = count_ngrams(hyp_chars, n);
      const auto ref_counts = count_ngrams(ref_chars, n);
      std::int64_t matches = 0;
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end())
          matches += std::min(count, it->second);
      }
      const auto total = [](std::size_t len, std::size_t order) -> std::int64_t {
        return len >= order ? static_cast<std::int64_t>(len - order + 1) : 0;
      };
      stats.orders[n - 1] = {total(hyp_chars.size(), n), total(ref_chars.size(), n), matches};
    }
    return stats;
  }

  double chrf_from_stats(const ChrfStats& stats, const ChrfParams& params) {
    params.validate();
    const double beta2 = params.beta * params.beta;
    double f_sum = 0;
    int counted = 0;
    for (const auto& [hyp_n, ref_n, match] : stats.orders) {
      if (hyp_n == 0 && ref_n == 0)
        continue;
      ++counted;
      const double prec = hyp_n > 0 ? static_cast<double>(match) / static_cast<double>(hyp_n) : 0;
      const double rec = ref_n > 0 ? static_cast<double>(match) / static_cast<double>(ref_n) : 0;
      const double denom = beta2 * prec + rec;
      if (denom > 0)
        f_sum += (1 + beta2) * prec * rec / denom;
    }
    if (counted == 0)
      return 0;
    return 100.0 * f_sum / counted;
  }

  double chrf(std::string_view hyp, std::string_view ref, const ChrfParams& params) {
    return chrf_from_stats(chrf_stats(hyp, ref, params), params);
  }

  double hallucination_rate_chrf(std::span<const std::string> hyps,
                                 std::span<const std::string> refs,
                                 double threshold,
                                 const ChrfParams& params) {
    if (hyps.size() != refs.size())
      throw InvalidArgument("hypothesis and reference counts differ");
    if (hyps.empty())
      throw InvalidArgument("hallucination rate of an empty set");
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      if (chrf(hyps[i], refs[i], params) < threshold)
        ++flagged;
    }
    return 100.0 * static_cast<double>(flagged) / static_cast<double>(hyps.size());
  }

  double corpus_chrf_text(std::span<const std::string> hyps, std::span<const std::string> refs) {
    if (hyps.size() != refs.size())
      throw InvalidArgument("hypothesis and reference counts differ");
    ChrfStats total;
    for (std::size_t i = 0; i < hyps.size(); ++i)
      total += chrf_stats(hyps[i], refs[i]);
    return chrf_from_stats(total);
  }

}
