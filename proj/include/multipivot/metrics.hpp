#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "multipivot/core.hpp"

namespace multipivot::metrics {

  // ---------------------------------------------------------------- chrF

  struct ChrfParams {
    int char_order = 6;
    double beta = 3.0;
    bool strip_whitespace = true;

    void validate() const;
  };

  // Character n-gram counts per order: {hypothesis n-grams, reference n-grams, clipped matches}.
  struct ChrfStats {
    std::vector<std::array<std::int64_t, 3>> orders;

    ChrfStats& operator+=(const ChrfStats& other);
  };

  ChrfStats chrf_stats(std::string_view hyp, std::string_view ref, const ChrfParams& params = {});

  // 100 x macro-average over orders of F_beta. Orders without n-grams on either
  // side are left out of the average.
  double chrf_from_stats(const ChrfStats& stats, const ChrfParams& params = {});

  double chrf(std::string_view hyp, std::string_view ref, const ChrfParams& params = {});

  // Percentage of pairs whose chrF falls strictly below the threshold.
  double hallucination_rate_chrf(std::span<const std::string> hyps,
                                 std::span<const std::string> refs,
                                 double threshold = 20.0,
                                 const ChrfParams& params = {});

  // ---------------------------------------------------------------- BLEU

  inline constexpr int kBleuOrder = 4;

  struct BleuStats {
    std::int64_t hyp_len = 0;
    std::int64_t ref_len = 0;
    std::array<std::int64_t, kBleuOrder> matches{};
    std::array<std::int64_t, kBleuOrder> totals{};

    BleuStats& operator+=(const BleuStats& other);
  };

  using Words = std::vector<std::string>;

  BleuStats bleu_stats(std::span<const std::string> hyp, std::span<const std::string> ref);
  BleuStats bleu_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref);

  // Corpus BLEU-4 in [0, 100]. A zero match count at order n is replaced by
  // 1 / (2^k * total_n), where k counts the zero orders seen so far
  // ("exp" smoothing). Brevity penalty exp(min(0, 1 - ref_len / hyp_len)).
  double bleu_from_stats(const BleuStats& stats);

  double bleu(std::span<const Words> hyps, std::span<const Words> refs);
  double bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs);

  // Splits on whitespace.
  Words tokenize(std::string_view text);

  // ---------------------------------------------------------------- TNG

  struct TngParams {
    int n = 4;
    int t = 2;

    void validate() const;
  };

  // Highest occurrence count of any n-gram; 0 when the sequence is shorter than n.
  std::size_t top_ngram_count(std::span<const std::string> seq, std::size_t n);
  std::size_t top_ngram_count(std::span<const TokenId> seq, std::size_t n);

  // Oscillation check: the hypothesis repeats its top n-gram at least t more
  // times than the source repeats its own.
  bool tng_flag(std::span<const std::string> src,
                std::span<const std::string> hyp,
                const TngParams& params = {});
  bool tng_flag(std::span<const TokenId> src,
                std::span<const TokenId> hyp,
                const TngParams& params = {});

  double tng_hallucination_rate(std::span<const Words> srcs,
                                std::span<const Words> hyps,
                                const TngParams& params = {});

  // ---------------------------------------------------------------- bootstrap

  struct BootstrapParams {
    std::size_t resamples = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 12345;

    void validate() const;
  };

  enum class Winner {
    a,
    b,
    tie,
  };

  std::string_view to_string(Winner winner);

  struct BootstrapResult {
    Winner winner = Winner::tie;
    double p_value = 1.0;
    bool significant = false;
    double score_a = 0;
    double score_b = 0;
  };

  // Corpus metric evaluated on a resample, given as indices into the corpus.
  using IndexedMetric = std::function<double(std::span<const std::size_t>)>;

  // Paired bootstrap resampling. The apparent winner is decided on the full
  // corpus; p_value is the fraction of resamples where the loser scores at
  // least as well as the winner.
  BootstrapResult paired_bootstrap(std::size_t corpus_size,
                                   const IndexedMetric& metric_a,
                                   const IndexedMetric& metric_b,
                                   const BootstrapParams& params = {},
                                   bool higher_is_better = true);

  // Metric over aligned hypothesis / reference texts.
  using CorpusMetric =
    std::function<double(std::span<const std::string> hyps, std::span<const std::string> refs)>;

  BootstrapResult paired_bootstrap(const CorpusMetric& metric,
                                   std::span<const std::string> sys_a,
                                   std::span<const std::string> sys_b,
                                   std::span<const std::string> refs,
                                   const BootstrapParams& params = {},
                                   bool higher_is_better = true);

  // BLEU via per-sentence sufficient statistics.
  BootstrapResult paired_bootstrap_bleu(std::span<const BleuStats> sys_a,
                                        std::span<const BleuStats> sys_b,
                                        const BootstrapParams& params = {});

  // Corpus metrics usable with the text overload above.
  double corpus_bleu_text(std::span<const std::string> hyps, std::span<const std::string> refs);
  double corpus_chrf_text(std::span<const std::string> hyps, std::span<const std::string> refs);

  // ---------------------------------------------------------------- reports

  struct EvalSentence {
    std::string id;
    Words source;
    Words reference;
    std::string reference_text;
  };

  struct SystemOutput {
    Words tokens;
    std::string text;
  };

  struct SystemRun {
    std::string system;
    // Aligned with the evaluated sentences; nullopt marks a failed sentence.
    std::vector<std::optional<SystemOutput>> outputs;
  };

  struct EvalOptions {
    ChrfParams chrf;
    double chrf_threshold = 20.0;
    TngParams tng;
    BootstrapParams bootstrap;
  };

  struct SystemScores {
    std::string system;
    double bleu = 0;
    double chrf_hallucination_rate = 0;
    double tng_hallucination_rate = 0;
    // Only known for synthetic tasks.
    std::optional<double> ground_truth_hallucination_rate;
    std::size_t scored = 0;
    std::size_t failed = 0;
  };

  struct EvalReport {
    std::string src_lang;
    std::string tgt_lang;
    std::vector<SystemScores> systems;
    // Systems not significantly outperformed on BLEU by any other system.
    std::vector<std::string> best;
    double alpha = 0.05;
    double chrf_threshold = 20.0;

    const SystemScores& at(std::string_view system) const;
    bool is_best(std::string_view system) const;
  };

  EvalReport evaluate(std::string_view src_lang,
                      std::string_view tgt_lang,
                      std::span<const EvalSentence> sentences,
                      std::span<const SystemRun> runs,
                      const EvalOptions& options = {});

  nlohmann::json to_json(const EvalReport& report);
  EvalReport report_from_json(const nlohmann::json& j);

  // Column heading for a system id: "direct" -> "Direct", "pivot:en" -> "EN Pivot".
  std::string display_name(std::string_view system);

  // Plain-text tables, one row per direction plus an average row when there is
  // more than one. Best systems are marked with '*' in the BLEU table.
  std::string render_tables(std::span<const EvalReport> reports);

}
