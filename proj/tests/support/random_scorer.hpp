#pragma once

#include <atomic>
#include <cmath>

#include "multipivot/decoder.hpp"
#include "multipivot/random.hpp"

namespace multipivot::testing {

  // Random but reproducible: every distribution is a pure function of the
  // query (source, target language, prefix) and the seed.
  class RandomScorer : public Scorer {
  public:
    RandomScorer(std::size_t vocab_size,
                 std::uint64_t seed,
                 double zero_prob = 0.0,
                 double spread = 3.0)
      : _vocab_size(vocab_size)
      , _seed(seed)
      , _zero_prob(zero_prob)
      , _spread(spread) {
    }

    std::size_t vocab_size() const override {
      return _vocab_size;
    }
    TokenId eos_id() const override {
      return static_cast<TokenId>(_vocab_size - 1);
    }

    StepDistribution distribution(const StepQuery& q) const {
      std::uint64_t h = hash_string(_seed, q.source->lang);
      for (const TokenId t : q.source->tokens)
        h = hash_combine(h, static_cast<std::uint64_t>(t));
      h = hash_string(h, q.target_lang);
      h = hash_combine(h, q.prefix.size());
      for (const TokenId t : q.prefix)
        h = hash_combine(h, static_cast<std::uint64_t>(t));
      RandomStream rng(h);
      std::vector<double> logits(_vocab_size);
      for (auto& v : logits)
        v = _spread * (2 * rng.uniform() - 1);
      for (std::size_t y = 0; y + 1 < _vocab_size; ++y) {
        if (rng.uniform() < _zero_prob)
          logits[y] = kNegInf;
      }
      return StepDistribution::renormalized(std::move(logits));
    }

    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override {
      ++calls;
      this->queries += queries.size();
      std::vector<StepDistribution> out;
      out.reserve(queries.size());
      for (const auto& q : queries)
        out.push_back(distribution(q));
      return out;
    }

    std::atomic<std::size_t> calls{0};
    std::atomic<std::size_t> queries{0};

  private:
    std::size_t _vocab_size;
    std::uint64_t _seed;
    double _zero_prob;
    double _spread;
  };

  // K random sources over the same vocabulary, languages "l0".."l{K-1}".
  inline SourceSet random_sources(std::size_t k, std::size_t vocab_size, std::uint64_t seed) {
    RandomStream rng(seed);
    std::vector<SourceEntry> entries;
    for (std::size_t i = 0; i < k; ++i) {
      SourceEntry e;
      e.lang = "l" + std::to_string(i);
      const std::size_t len = 1 + rng.below(5);
      for (std::size_t j = 0; j < len; ++j)
        e.tokens.push_back(static_cast<TokenId>(rng.below(vocab_size - 1)));
      e.tokens.push_back(static_cast<TokenId>(vocab_size - 1));
      entries.push_back(std::move(e));
    }
    return SourceSet(std::move(entries));
  }

  // Random normalized distribution; entries may be exactly zero.
  inline StepDistribution random_distribution(RandomStream& rng,
                                              std::size_t vocab_size,
                                              double zero_prob = 0.0) {
    std::vector<double> logits(vocab_size);
    for (auto& v : logits)
      v = 6 * rng.uniform() - 3;
    for (std::size_t y = 1; y < vocab_size; ++y) {
      if (rng.uniform() < zero_prob)
        logits[y] = kNegInf;
    }
    return StepDistribution::renormalized(std::move(logits));
  }

}
