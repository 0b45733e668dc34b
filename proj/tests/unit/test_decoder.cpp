#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "multipivot/decoder.hpp"
#include "support/oracles.hpp"
#include "support/random_scorer.hpp"

using namespace multipivot;
using testing::RandomScorer;

namespace {

  constexpr Combiner kAll[] = {Combiner::direct, Combiner::multiavg, Combiner::maxens,
                               Combiner::logavg};

  std::size_t sources_for(Combiner c, RandomStream& rng) {
    return c == Combiner::direct ? 1 : 2 + rng.below(3);
  }

  bool same_bits(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
  }

  bool identical(const std::vector<Hypothesis>& a, const std::vector<Hypothesis>& b) {
    if (a.size() != b.size())
      return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].tokens != b[i].tokens || !same_bits(a[i].score, b[i].score)
          || a[i].finished != b[i].finished || a[i].provenance != b[i].provenance
          || a[i].step_scores.size() != b[i].step_scores.size())
        return false;
      for (std::size_t j = 0; j < a[i].step_scores.size(); ++j) {
        if (!same_bits(a[i].step_scores[j], b[i].step_scores[j]))
          return false;
      }
    }
    return true;
  }

  // Fixed per-prefix-length distributions, independent of the source.
  class TableScorer : public Scorer {
  public:
    TableScorer(std::vector<std::vector<double>> probs_by_step, TokenId eos)
      : _eos(eos) {
      for (const auto& p : probs_by_step)
        _steps.push_back(StepDistribution::from_probs(p));
    }
    std::size_t vocab_size() const override {
      return _steps.front().size();
    }
    TokenId eos_id() const override {
      return _eos;
    }
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override {
      std::vector<StepDistribution> out;
      for (const auto& q : queries)
        out.push_back(_steps[std::min(q.prefix.size(), _steps.size() - 1)]);
      return out;
    }

  private:
    std::vector<StepDistribution> _steps;
    TokenId _eos;
  };

  // Scorer that depends on the source language: per language a table by step.
  class PerSourceScorer : public Scorer {
  public:
    std::map<std::string, std::vector<StepDistribution>> tables;
    std::size_t v = 0;
    TokenId eos = 0;

    std::size_t vocab_size() const override {
      return v;
    }
    TokenId eos_id() const override {
      return eos;
    }
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override {
      std::vector<StepDistribution> out;
      for (const auto& q : queries) {
        const auto& t = tables.at(q.source->lang);
        out.push_back(t[std::min(q.prefix.size(), t.size() - 1)]);
      }
      return out;
    }
  };

  class RecordingScorer : public Scorer {
  public:
    explicit RecordingScorer(Scorer& inner)
      : _inner(inner) {
    }
    std::size_t vocab_size() const override {
      return _inner.vocab_size();
    }
    TokenId eos_id() const override {
      return _inner.eos_id();
    }
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override {
      std::vector<TokenSeq> prefixes;
      std::vector<std::string> langs;
      for (const auto& q : queries) {
        prefixes.emplace_back(q.prefix.begin(), q.prefix.end());
        langs.push_back(q.source->lang);
      }
      batches.push_back(prefixes);
      batch_langs.push_back(langs);
      return _inner.score(queries);
    }
    std::vector<std::vector<TokenSeq>> batches;
    std::vector<std::vector<std::string>> batch_langs;

  private:
    Scorer& _inner;
  };

  class FailingScorer : public Scorer {
  public:
    FailingScorer(Scorer& inner, std::size_t fail_at, bool wrong_size = false)
      : _inner(inner)
      , _fail_at(fail_at)
      , _wrong_size(wrong_size) {
    }
    std::size_t vocab_size() const override {
      return _inner.vocab_size();
    }
    TokenId eos_id() const override {
      return _inner.eos_id();
    }
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override {
      if (_calls++ == _fail_at) {
        if (!_wrong_size)
          throw std::runtime_error("backend went away");
        return {StepDistribution::from_probs(std::vector<double>{1.0})};
      }
      return _inner.score(queries);
    }

  private:
    Scorer& _inner;
    std::size_t _fail_at;
    bool _wrong_size;
    std::size_t _calls = 0;
  };

  // Greedy decoding straight from the naive combination formulas.
  TokenSeq greedy(const SourceSet& sources, Scorer& scorer, Combiner c, std::size_t max_len) {
    TokenSeq prefix;
    while (prefix.size() < max_len) {
      std::vector<StepDistribution> dists;
      for (std::size_t k = 0; k < sources.size(); ++k) {
        const StepQuery q{&sources[k], "t", prefix};
        dists.push_back(scorer.score(std::span(&q, 1)).front());
      }
      const auto scores = testing::naive_combine(c, dists);
      const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
      prefix.push_back(static_cast<TokenId>(best));
      if (prefix.back() == scorer.eos_id())
        break;
    }
    return prefix;
  }

}

TEST_CASE("beam search matches exhaustive enumeration") {
  RandomStream rng(101);
  for (const auto& [v, max_len] : {std::pair<std::size_t, std::size_t>{4, 4}, {6, 3}, {3, 5}}) {
    std::size_t beam = 1;
    for (std::size_t i = 0; i < max_len; ++i)
      beam *= v;
    for (int trial = 0; trial < 10; ++trial) {
      for (const auto c : kAll) {
        RandomScorer scorer(v, rng.below(1u << 30), 0.1);
        const auto sources = testing::random_sources(sources_for(c, rng), v, rng.below(1u << 30));
        const auto oracle = testing::exhaustive_search(sources, "t", scorer, c, max_len);
        const auto result = beam_search(sources, "t", scorer, DecodeParams{beam, max_len, c});
        REQUIRE(result.finished);
        CHECK(result.hypotheses.front().tokens == oracle.tokens);
        CHECK(std::abs(result.hypotheses.front().score - oracle.score) <= 1e-9);
      }
    }
  }
}

TEST_CASE("no beam size beats the exhaustive optimum") {
  RandomStream rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    for (const auto c : kAll) {
      RandomScorer scorer(4, rng.below(1u << 30));
      const auto sources = testing::random_sources(sources_for(c, rng), 4, rng.below(1u << 30));
      const auto oracle = testing::exhaustive_search(sources, "t", scorer, c, 4);
      for (std::size_t beam = 1; beam <= 8; ++beam) {
        const auto r = beam_search(sources, "t", scorer, DecodeParams{beam, 4, c});
        if (r.finished)
          CHECK(r.hypotheses.front().score <= oracle.score + 1e-12);
      }
    }
  }
}

TEST_CASE("a wider beam can return a worse best hypothesis") {
  // Pinned instance: beam 2 prunes the path that greedy search follows.
  RandomScorer scorer(4, 388);
  const auto sources = testing::random_sources(1, 4, 388);
  const auto narrow = beam_search(sources, "t", scorer, DecodeParams{1, 8, Combiner::direct});
  const auto wide = beam_search(sources, "t", scorer, DecodeParams{2, 8, Combiner::direct});
  REQUIRE(narrow.finished);
  REQUIRE(wide.finished);
  CHECK(wide.hypotheses.front().score < narrow.hypotheses.front().score - 0.1);
  const auto oracle = testing::exhaustive_search(sources, "t", scorer, Combiner::direct, 8);
  CHECK(oracle.score >= narrow.hypotheses.front().score);
}

TEST_CASE("beam size 1 is greedy decoding on combined scores") {
  RandomStream rng(107);
  for (int trial = 0; trial < 50; ++trial) {
    for (const auto c : kAll) {
      RandomScorer scorer(2 + rng.below(10), rng.below(1u << 30));
      const auto sources =
        testing::random_sources(sources_for(c, rng), scorer.vocab_size(), rng.below(1u << 30));
      const auto r = beam_search(sources, "t", scorer, DecodeParams{1, 12, c});
      CHECK(r.hypotheses.front().tokens == greedy(sources, scorer, c, 12));
    }
  }
}

TEST_CASE("one source: every combiner yields the same hypotheses") {
  RandomStream rng(109);
  for (int trial = 0; trial < 30; ++trial) {
    RandomScorer scorer(3 + rng.below(8), rng.below(1u << 30), 0.1);
    const auto sources = testing::random_sources(1, scorer.vocab_size(), rng.below(1u << 30));
    const auto base = beam_search(sources, "t", scorer, DecodeParams{4, 10, Combiner::direct});
    for (const auto c : {Combiner::multiavg, Combiner::maxens, Combiner::logavg}) {
      const auto r = beam_search(sources, "t", scorer, DecodeParams{4, 10, c});
      REQUIRE(r.hypotheses.size() == base.hypotheses.size());
      for (std::size_t i = 0; i < r.hypotheses.size(); ++i) {
        CHECK(r.hypotheses[i].tokens == base.hypotheses[i].tokens);
        CHECK(std::abs(r.hypotheses[i].score - base.hypotheses[i].score) <= 1e-12);
      }
    }
  }
}

TEST_CASE("forced decoding reproduces beam scores") {
  RandomStream rng(113);
  for (int trial = 0; trial < 30; ++trial) {
    for (const auto c : kAll) {
      RandomScorer scorer(3 + rng.below(6), rng.below(1u << 30), 0.1);
      const auto sources =
        testing::random_sources(sources_for(c, rng), scorer.vocab_size(), rng.below(1u << 30));
      const auto r = beam_search(sources, "t", scorer, DecodeParams{5, 10, c});
      for (const auto& hyp : r.hypotheses) {
        if (!hyp.finished)
          continue;
        const double forced = score_fixed_sequence(hyp.tokens, sources, "t", scorer, c);
        CHECK(std::abs(forced - hyp.score) <= 1e-9);
        double sum = 0;
        for (const double s : hyp.step_scores)
          sum += s;
        CHECK(std::abs(sum - hyp.score) <= 1e-9);
        CHECK(hyp.tokens.back() == scorer.eos_id());
      }
    }
  }
}

TEST_CASE("forced decoding by hand") {
  PerSourceScorer scorer;
  scorer.v = 3;
  scorer.eos = 2;
  const auto d = [](double a, double b, double c) {
    return StepDistribution::from_probs(std::vector<double>{a, b, c});
  };
  scorer.tables["x"] = {d(0.6, 0.3, 0.1), d(0.2, 0.2, 0.6)};
  scorer.tables["y"] = {d(0.1, 0.7, 0.2), d(0.5, 0.1, 0.4)};
  const SourceSet sources(std::vector<SourceEntry>{{"x", {0, 2}, {}}, {"y", {1, 2}, {}}});

  SUBCASE("eos only") {
    const TokenSeq seq{2};
    CHECK(score_fixed_sequence(seq, sources, "t", scorer, Combiner::maxens)
          == doctest::Approx(std::log(0.2)).epsilon(1e-15));
    CHECK(score_fixed_sequence(seq, sources, "t", scorer, Combiner::multiavg)
          == doctest::Approx(std::log(0.15)).epsilon(1e-15));
  }
  SUBCASE("two steps under max") {
    const TokenSeq seq{1, 2};
    const double hand = std::log(0.7) + std::log(0.6);
    CHECK(std::abs(score_fixed_sequence(seq, sources, "t", scorer, Combiner::maxens) - hand) <= 1e-15);
  }
  SUBCASE("two steps under the log average") {
    const TokenSeq seq{0, 2};
    const double hand = (std::log(0.6) + std::log(0.1)) / 2 + (std::log(0.6) + std::log(0.4)) / 2;
    CHECK(std::abs(score_fixed_sequence(seq, sources, "t", scorer, Combiner::logavg) - hand) <= 1e-15);
  }
  SUBCASE("contract violations") {
    CHECK_THROWS_AS(score_fixed_sequence(TokenSeq{0, 1}, sources, "t", scorer, Combiner::maxens),
                    InvalidArgument);
    CHECK_THROWS_AS(score_fixed_sequence(TokenSeq{7, 2}, sources, "t", scorer, Combiner::maxens),
                    InvalidArgument);
    CHECK_THROWS_AS(score_fixed_sequence(TokenSeq{1, 2}, sources, "t", scorer, Combiner::direct),
                    InvalidArgument);
  }
}

TEST_CASE("decoding is deterministic") {
  RandomStream rng(127);
  for (int trial = 0; trial < 10; ++trial) {
    RandomScorer scorer(12, rng.below(1u << 30), 0.2);
    const auto sources = testing::random_sources(3, 12, rng.below(1u << 30));
    for (const auto c : {Combiner::multiavg, Combiner::maxens, Combiner::logavg}) {
      const auto a = beam_search(sources, "t", scorer, DecodeParams{5, 20, c});
      const auto b = beam_search(sources, "t", scorer, DecodeParams{5, 20, c});
      CHECK(identical(a.hypotheses, b.hypotheses));
    }
  }
}

TEST_CASE("traces replay to the returned hypotheses") {
  RandomStream rng(131);
  for (int trial = 0; trial < 20; ++trial) {
    for (const auto c : kAll) {
      RandomScorer scorer(3 + rng.below(8), rng.below(1u << 30), 0.2);
      const auto sources =
        testing::random_sources(sources_for(c, rng), scorer.vocab_size(), rng.below(1u << 30));
      const DecodeParams params{1 + rng.below(6), 12, c};
      const auto r = beam_search(sources, "t", scorer, params, true);
      CHECK(identical(replay_trace(r.trace, scorer.eos_id(), params), r.hypotheses));

      std::stringstream jsonl;
      write_trace_jsonl(jsonl, r.trace);
      const auto restored = read_trace_jsonl(jsonl);
      CHECK(identical(replay_trace(restored, scorer.eos_id(), params), r.hypotheses));
      if (c == Combiner::maxens) {
        for (const auto& hyp : r.hypotheses)
          CHECK(hyp.provenance.size() == hyp.tokens.size());
      }
    }
  }
}

TEST_CASE("one scorer batch per step, all sources on one shared prefix") {
  RandomScorer inner(9, 5);
  RecordingScorer scorer(inner);
  const auto sources = testing::random_sources(3, 9, 7);
  const auto r = beam_search(sources, "t", scorer, DecodeParams{4, 15, Combiner::maxens}, true);
  CHECK(scorer.batches.size() == r.trace.steps.size());
  for (std::size_t s = 0; s < scorer.batches.size(); ++s) {
    const auto& batch = scorer.batches[s];
    REQUIRE(batch.size() == 3 * r.trace.steps[s].beam_in);
    for (std::size_t q = 0; q < batch.size(); q += 3) {
      CHECK(batch[q] == batch[q + 1]);
      CHECK(batch[q] == batch[q + 2]);
      CHECK(scorer.batch_langs[s][q] == "l0");
      CHECK(scorer.batch_langs[s][q + 2] == "l2");
      CHECK(batch[q].size() == s);
    }
  }
}

TEST_CASE("scorer failures surface as decode errors with the step") {
  RandomScorer inner(6, 9);
  const auto sources = testing::random_sources(2, 6, 9);
  for (std::size_t step : {0u, 2u}) {
    FailingScorer scorer(inner, step);
    try {
      beam_search(sources, "t", scorer, DecodeParams{3, 20, Combiner::multiavg});
      FAIL("expected a decode error");
    } catch (const DecodeError& e) {
      CHECK(e.step() == step);
    }
  }
  FailingScorer wrong(inner, 1, true);
  CHECK_THROWS_AS(beam_search(sources, "t", wrong, DecodeParams{3, 20, Combiner::multiavg}),
                  DecodeError);
}

TEST_CASE("direct scoring takes exactly one source") {
  RandomScorer scorer(5, 1);
  const auto sources = testing::random_sources(2, 5, 1);
  CHECK_THROWS_AS(beam_search(sources, "t", scorer, DecodeParams{2, 5, Combiner::direct}),
                  InvalidArgument);
}

TEST_CASE("nothing finished within max_len returns flagged unfinished hypotheses") {
  TableScorer scorer({{0.5, 0.5, 0.0}}, 2);
  const SourceSet sources(std::vector<SourceEntry>{{"x", {0}, {}}});
  const auto r = beam_search(sources, "t", scorer, DecodeParams{2, 3, Combiner::direct});
  CHECK_FALSE(r.finished);
  REQUIRE(r.hypotheses.size() == 2);
  for (const auto& hyp : r.hypotheses) {
    CHECK_FALSE(hyp.finished);
    CHECK(hyp.tokens.size() == 3);
    CHECK(std::isfinite(hyp.score));
  }
}

TEST_CASE("score ties break toward lower token ids, then earlier parents") {
  TableScorer scorer({{0.25, 0.25, 0.25, 0.25}}, 3);
  const SourceSet sources(std::vector<SourceEntry>{{"x", {0}, {}}});
  const auto r = beam_search(sources, "t", scorer, DecodeParams{2, 2, Combiner::direct});
  CHECK_FALSE(r.finished);
  REQUIRE(r.hypotheses.size() == 2);
  CHECK(r.hypotheses[0].tokens == TokenSeq{0, 0});
  CHECK(r.hypotheses[1].tokens == TokenSeq{1, 0});
}

TEST_CASE("zero-probability tokens are never chosen") {
  RandomStream rng(137);
  for (int trial = 0; trial < 30; ++trial) {
    RandomScorer scorer(8, rng.below(1u << 30), 0.6);
    const auto sources = testing::random_sources(2, 8, rng.below(1u << 30));
    for (const auto c : {Combiner::multiavg, Combiner::maxens, Combiner::logavg}) {
      const auto r = beam_search(sources, "t", scorer, DecodeParams{4, 10, c});
      for (const auto& hyp : r.hypotheses) {
        CHECK(std::isfinite(hyp.score));
        for (const double s : hyp.step_scores)
          CHECK(std::isfinite(s));
      }
    }
  }
}

TEST_CASE("finished pool is capped and ranked") {
  RandomStream rng(139);
  for (int trial = 0; trial < 30; ++trial) {
    RandomScorer scorer(6, rng.below(1u << 30));
    const auto sources = testing::random_sources(2, 6, rng.below(1u << 30));
    for (const auto norm : {LengthNormalization::none, LengthNormalization::by_length}) {
      DecodeParams params{4, 12, Combiner::multiavg, norm};
      const auto r = beam_search(sources, "t", scorer, params);
      CHECK(r.hypotheses.size() <= 4);
      for (std::size_t i = 1; i < r.hypotheses.size(); ++i)
        CHECK(ranking_score(r.hypotheses[i - 1], norm) >= ranking_score(r.hypotheses[i], norm));
      for (const auto& hyp : r.hypotheses)
        CHECK(hyp.finished == (hyp.tokens.back() == scorer.eos_id()));
    }
  }
}

TEST_CASE("length normalization changes what wins") {
  // eos right away costs log 0.55; two tokens then eos costs
  // log 0.45 + 2 log 0.99, lower in total but higher per token.
  TableScorer scorer({{0.45, 0.0, 0.55}, {0.99, 0.0, 0.01}, {0.01, 0.0, 0.99}}, 2);
  const SourceSet sources(std::vector<SourceEntry>{{"x", {0}, {}}});
  const auto raw = beam_search(sources, "t", scorer, DecodeParams{3, 5, Combiner::direct});
  CHECK(raw.hypotheses.front().tokens == TokenSeq{2});
  const auto norm = beam_search(
    sources, "t", scorer, DecodeParams{3, 5, Combiner::direct, LengthNormalization::by_length});
  CHECK(norm.hypotheses.front().tokens == TokenSeq{0, 0, 2});
}

TEST_CASE("renormalized maxens is an option, off by default") {
  RandomScorer scorer(6, 3);
  const auto sources = testing::random_sources(3, 6, 3);
  DecodeParams params{3, 8, Combiner::maxens};
  const auto raw = beam_search(sources, "t", scorer, params);
  params.renormalize_maxens = true;
  const auto renorm = beam_search(sources, "t", scorer, params);
  for (const auto& hyp : renorm.hypotheses) {
    if (hyp.finished)
      CHECK(std::abs(score_fixed_sequence(hyp.tokens, sources, "t", scorer, Combiner::maxens,
                                          CombineOptions{true})
                     - hyp.score)
            <= 1e-9);
  }
  CHECK(raw.hypotheses.front().score >= renorm.hypotheses.front().score);
}
