#include "multipivot/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace multipivot {

  double log_sum_exp(std::span<const double> values) {
    if (values.empty())
      return kNegInf;
    const double max_value = *std::max_element(values.begin(), values.end());
    if (max_value == kNegInf)
      return kNegInf;
    double sum = 0;
    for (const double v : values)
      sum += std::exp(v - max_value);
    return max_value + std::log(sum);
  }

  Vocab::Vocab(std::vector<std::string> tokens, TokenId eos_id, std::optional<TokenId> bos_id)
    : _tokens(std::move(tokens))
    , _eos_id(eos_id)
    , _bos_id(bos_id) {
    if (_tokens.empty())
      throw InvalidArgument("vocabulary is empty");
    if (!contains(_eos_id))
      throw InvalidArgument("eos id " + std::to_string(_eos_id) + " outside vocabulary");
    if (_bos_id && !contains(*_bos_id))
      throw InvalidArgument("bos id outside vocabulary");
    _index.reserve(_tokens.size());
    for (std::size_t i = 0; i < _tokens.size(); ++i) {
      if (!_index.emplace(_tokens[i], static_cast<TokenId>(i)).second)
        throw InvalidArgument("duplicate vocabulary token '" + _tokens[i] + "'");
    }
  }

  const std::string& Vocab::token(TokenId id) const {
    if (!contains(id))
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
    return _tokens[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> Vocab::find(std::string_view token) const {
    auto it = _index.find(std::string(token));
    if (it == _index.end())
      return std::nullopt;
    return it->second;
  }

  void Vocab::check(std::span<const TokenId> ids) const {
    for (const TokenId id : ids) {
      if (!contains(id))
        throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size "
                              + std::to_string(size()));
    }
  }

  bool Vocab::is_complete(std::span<const TokenId> ids) const {
    return multipivot::is_complete(ids, _eos_id);
  }

  TokenSeq Vocab::encode(std::string_view text, bool append_eos) const {
    TokenSeq ids;
    std::istringstream stream{std::string(text)};
    std::string word;
    while (stream >> word) {
      auto id = find(word);
      if (!id)
        throw InvalidArgument("unknown token '" + word + "'");
      ids.push_back(*id);
    }
    if (append_eos)
      ids.push_back(_eos_id);
    return ids;
  }

  std::string Vocab::decode(std::span<const TokenId> ids) const {
    std::string text;
    for (const TokenId id : ids) {
      if (id == _eos_id)
        continue;
      if (!text.empty())
        text += ' ';
      text += token(id);
    }
    return text;
  }

  bool is_complete(std::span<const TokenId> ids, TokenId eos_id) {
    if (ids.empty() || ids.back() != eos_id)
      return false;
    return std::count(ids.begin(), ids.end(), eos_id) == 1;
  }

  static void check_entries(std::span<const double> logprobs) {
    if (logprobs.empty())
      throw InvalidArgument("empty distribution");
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
      const double v = logprobs[i];
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
        throw InvalidArgument("non-finite log-probability at index " + std::to_string(i));
    }
  }

  StepDistribution StepDistribution::from_logprobs(std::vector<double> logprobs,
                                                   double tolerance) {
    check_entries(logprobs);
    const double lse = log_sum_exp(logprobs);
    if (!(std::abs(lse) <= tolerance))
      throw InvalidArgument("distribution not normalized (log-sum-exp "
                            + std::to_string(lse) + ")");
    return StepDistribution(std::move(logprobs));
  }

  StepDistribution StepDistribution::renormalized(std::vector<double> logprobs) {
    check_entries(logprobs);
    const double lse = log_sum_exp(logprobs);
    if (lse == kNegInf)
      throw InvalidArgument("distribution has no mass");
    for (double& v : logprobs)
      v -= lse;
    return StepDistribution(std::move(logprobs));
  }

  StepDistribution StepDistribution::from_probs(std::span<const double> probs, double tolerance) {
    std::vector<double> logprobs;
    logprobs.reserve(probs.size());
    for (const double p : probs) {
      if (!(p >= 0) || p > 1 + tolerance)
        throw InvalidArgument("probability out of range: " + std::to_string(p));
      logprobs.push_back(p == 0 ? kNegInf : std::log(p));
    }
    return from_logprobs(std::move(logprobs), tolerance);
  }

  SourceSet::SourceSet(std::vector<SourceEntry> entries)
    : _entries(std::move(entries)) {
    if (_entries.empty())
      throw InvalidArgument("source set must contain at least one entry");
    for (std::size_t i = 0; i < _entries.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (_entries[i].lang == _entries[j].lang)
          throw InvalidArgument("duplicate language '" + _entries[i].lang + "' in source set");
      }
    }
  }

  void DecodeParams::validate() const {
    if (beam_size < 1)
      throw InvalidArgument("beam_size must be >= 1");
    if (max_len < 1)
      throw InvalidArgument("max_len must be >= 1");
  }

  std::string_view to_string(Combiner combiner) {
    switch (combiner) {
    case Combiner::direct:
      return "direct";
    case Combiner::multiavg:
      return "multiavg";
    case Combiner::maxens:
      return "maxens";
    case Combiner::logavg:
      return "logavg";
    }
    return "unknown";
  }

  Combiner combiner_from_string(std::string_view name) {
    if (name == "direct")
      return Combiner::direct;
    if (name == "multiavg")
      return Combiner::multiavg;
    if (name == "maxens")
      return Combiner::maxens;
    if (name == "logavg")
      return Combiner::logavg;
    throw InvalidArgument("unknown combiner '" + std::string(name) + "'");
  }

  std::string_view to_string(LengthNormalization norm) {
    return norm == LengthNormalization::none ? "none" : "by_length";
  }

  LengthNormalization length_normalization_from_string(std::string_view name) {
    if (name == "none")
      return LengthNormalization::none;
    if (name == "by_length")
      return LengthNormalization::by_length;
    throw InvalidArgument("unknown length normalization '" + std::string(name) + "'");
  }

  double recompute_score(const Hypothesis& hyp, std::span<const CombinedStep> steps) {
    if (steps.size() != hyp.tokens.size())
      throw InvalidArgument("got " + std::to_string(steps.size()) + " steps for "
                            + std::to_string(hyp.tokens.size()) + " tokens");
    double score = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const TokenId y = hyp.tokens[i];
      if (y < 0 || static_cast<std::size_t>(y) >= steps[i].logscores.size())
        throw InvalidArgument("token outside step vector at position " + std::to_string(i));
      score += steps[i].logscores[static_cast<std::size_t>(y)];
    }
    return score;
  }

  double ranking_score(const Hypothesis& hyp, LengthNormalization norm) {
    if (norm == LengthNormalization::by_length && !hyp.tokens.empty())
      return hyp.score / static_cast<double>(hyp.tokens.size());
    return hyp.score;
  }

}
