#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "multipivot/error.hpp"

namespace multipivot {

  using TokenId = std::int32_t;
  using TokenSeq = std::vector<TokenId>;

  inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // Tolerance on log-sum-exp for distributions produced inside the engine.
  inline constexpr double kNormTolerance = 1e-6;

  // Stable log(sum(exp(x))). Returns -inf for an empty or all -inf input.
  double log_sum_exp(std::span<const double> values);

  class Vocab {
  public:
    Vocab(std::vector<std::string> tokens,
          TokenId eos_id,
          std::optional<TokenId> bos_id = std::nullopt);

    std::size_t size() const {
      return _tokens.size();
    }
    TokenId eos_id() const {
      return _eos_id;
    }
    std::optional<TokenId> bos_id() const {
      return _bos_id;
    }
    const std::vector<std::string>& tokens() const {
      return _tokens;
    }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> find(std::string_view token) const;

    bool contains(TokenId id) const {
      return id >= 0 && static_cast<std::size_t>(id) < _tokens.size();
    }

    // Throws InvalidArgument if any id falls outside the vocabulary.
    void check(std::span<const TokenId> ids) const;

    // A complete sequence ends with eos and contains it nowhere else.
    bool is_complete(std::span<const TokenId> ids) const;

    // Whitespace tokenizer: every whitespace-separated word must be a vocab token.
    TokenSeq encode(std::string_view text, bool append_eos = true) const;
    // Joins tokens with single spaces; eos is dropped.
    std::string decode(std::span<const TokenId> ids) const;

  private:
    std::vector<std::string> _tokens;
    TokenId _eos_id;
    std::optional<TokenId> _bos_id;
    std::unordered_map<std::string, TokenId> _index;
  };

  bool is_complete(std::span<const TokenId> ids, TokenId eos_id);

  // Next-token log-probabilities (natural log) over the whole vocabulary.
  class StepDistribution {
  public:
    StepDistribution() = default;

    // Validates entries and normalization; does not modify the values.
    static StepDistribution from_logprobs(std::vector<double> logprobs,
                                          double tolerance = kNormTolerance);
    // Subtracts the log-sum-exp so the result is normalized exactly.
    static StepDistribution renormalized(std::vector<double> logprobs);
    static StepDistribution from_probs(std::span<const double> probs,
                                       double tolerance = kNormTolerance);

    std::span<const double> logprobs() const {
      return _logprobs;
    }
    std::size_t size() const {
      return _logprobs.size();
    }
    double operator[](std::size_t i) const {
      return _logprobs[i];
    }

  private:
    explicit StepDistribution(std::vector<double> logprobs)
      : _logprobs(std::move(logprobs)) {
    }

    std::vector<double> _logprobs;
  };

  // Per-token scores after combining K step distributions.
  struct CombinedStep {
    std::vector<double> logscores;
    bool normalized = true;
    // MaxEns only: index of the source that achieved the max for each token.
    std::vector<int> provenance;
  };

  struct SourceEntry {
    std::string lang;
    TokenSeq tokens;
    // Raw text, used by remote backends that own tokenization.
    std::optional<std::string> text;
  };

  // The conditioning inputs of one decode: the pivot translations, optionally
  // followed by the original source.
  class SourceSet {
  public:
    explicit SourceSet(std::vector<SourceEntry> entries);

    std::size_t size() const {
      return _entries.size();
    }
    const SourceEntry& operator[](std::size_t i) const {
      return _entries[i];
    }
    const std::vector<SourceEntry>& entries() const {
      return _entries;
    }

  private:
    std::vector<SourceEntry> _entries;
  };

  struct Hypothesis {
    TokenSeq tokens;
    double score = 0;
    bool finished = false;
    // Combined log-score of each generated token; sums to `score`.
    std::vector<double> step_scores;
    // MaxEns only: which source achieved the max at each step.
    std::vector<int> provenance;
  };

  enum class Combiner {
    direct,
    multiavg,
    maxens,
    logavg,
  };

  enum class LengthNormalization {
    none,
    by_length,
  };

  struct DecodeParams {
    std::size_t beam_size = 5;
    std::size_t max_len = 256;
    Combiner combiner = Combiner::direct;
    LengthNormalization length_normalization = LengthNormalization::none;
    // Renormalize MaxEns step scores into a distribution. Changes rankings.
    bool renormalize_maxens = false;

    void validate() const;
  };

  std::string_view to_string(Combiner combiner);
  Combiner combiner_from_string(std::string_view name);
  std::string_view to_string(LengthNormalization norm);
  LengthNormalization length_normalization_from_string(std::string_view name);

  // Sum of steps[i].logscores[tokens[i]].
  double recompute_score(const Hypothesis& hyp, std::span<const CombinedStep> steps);

  // Final ranking key under the chosen length handling.
  double ranking_score(const Hypothesis& hyp, LengthNormalization norm);

}
