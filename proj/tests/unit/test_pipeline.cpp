#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "multipivot/pipeline.hpp"
#include "support/random_scorer.hpp"

using namespace multipivot;
using testing::RandomScorer;

namespace {

  constexpr std::size_t kVocab = 9;

  class RandomBackend : public Backend {
  public:
    explicit RandomBackend(std::uint64_t seed, double zero_prob = 0.2)
      : scorer(std::make_shared<RandomScorer>(kVocab, seed, zero_prob)) {
    }
    std::shared_ptr<Scorer> scorer_for(const CorpusSentence&) override {
      return scorer;
    }
    TokenId eos_id() const override {
      return scorer->eos_id();
    }
    std::shared_ptr<RandomScorer> scorer;
  };

  // Fails chosen queries: pivot-stage queries into `bad_pivot`, or final-stage
  // queries once the prefix reaches `final_fail_len`.
  class FlakyScorer : public Scorer {
  public:
    FlakyScorer(Scorer& inner, std::string bad_pivot, std::string target, std::size_t final_fail_len)
      : _inner(inner)
      , _bad_pivot(std::move(bad_pivot))
      , _target(std::move(target))
      , _final_fail_len(final_fail_len) {
    }
    std::size_t vocab_size() const override {
      return _inner.vocab_size();
    }
    TokenId eos_id() const override {
      return _inner.eos_id();
    }
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override {
      for (const auto& q : queries) {
        if (q.target_lang == _bad_pivot)
          throw std::runtime_error("pivot model offline");
        if (q.target_lang == _target && q.prefix.size() >= _final_fail_len)
          throw std::runtime_error("final model offline");
      }
      return _inner.score(queries);
    }

  private:
    Scorer& _inner;
    std::string _bad_pivot;
    std::string _target;
    std::size_t _final_fail_len;
  };

  class FlakyBackend : public Backend {
  public:
    FlakyBackend()
      : _inner(kVocab, 5) {
    }
    std::shared_ptr<Scorer> scorer_for(const CorpusSentence& sentence) override {
      const int n = std::stoi(sentence.id.substr(1));
      if (n % 5 == 4)
        throw std::runtime_error("no model for this sentence");
      if (n % 5 == 1)
        return std::make_shared<FlakyScorer>(_inner, "es", "tgt", 1000);
      if (n % 5 == 2)
        return std::make_shared<FlakyScorer>(_inner, "", "tgt", 1);
      return std::make_shared<FlakyScorer>(_inner, "", "", 0);
    }
    TokenId eos_id() const override {
      return _inner.eos_id();
    }

  private:
    RandomScorer _inner;
  };

  RunConfig base_config() {
    RunConfig c;
    c.source_lang = "src";
    c.target_lang = "tgt";
    c.pivots = {"en", "es", "fr"};
    c.pivot_decode = DecodeParams{3, 12, Combiner::direct};
    c.final_decode = DecodeParams{3, 12, Combiner::direct};
    return c;
  }

  Corpus random_corpus(std::size_t n, std::uint64_t seed, bool with_refs = true) {
    RandomStream rng(seed);
    Corpus corpus;
    for (std::size_t i = 0; i < n; ++i) {
      CorpusSentence s;
      s.id = "s" + std::to_string(i);
      s.source.lang = "src";
      const std::size_t len = 2 + rng.below(6);
      TokenSeq ref;
      for (std::size_t j = 0; j < len; ++j) {
        s.source.tokens.push_back(static_cast<TokenId>(rng.below(kVocab - 1)));
        ref.push_back(static_cast<TokenId>(rng.below(4)));
      }
      s.source.tokens.push_back(kVocab - 1);
      ref.push_back(kVocab - 1);
      if (with_refs)
        s.reference = Reference{ref, {}};
      corpus.sentences.push_back(std::move(s));
    }
    return corpus;
  }

  const std::vector<Strategy> kStrategies{Strategy::direct(), Strategy::single("en"),
                                          Strategy::ensemble(Combiner::multiavg),
                                          Strategy::ensemble(Combiner::maxens),
                                          Strategy::ensemble(Combiner::logavg)};

  RunOptions quick_options(std::size_t workers = 1) {
    RunOptions o;
    o.workers = workers;
    o.eval.bootstrap.resamples = 200;
    return o;
  }

  std::string outputs_of(const CorpusRun& run) {
    std::ostringstream out;
    write_outputs_jsonl(out, run, "tgt", nullptr);
    return out.str();
  }

}

TEST_CASE("strategy ids") {
  for (const auto& s : kStrategies)
    CHECK(Strategy::parse(s.id()).id() == s.id());
  CHECK(Strategy::parse("single_pivot:de").id() == "pivot:de");
  CHECK_THROWS_AS(Strategy::parse("pivot:"), InvalidArgument);
  CHECK_THROWS_AS(Strategy::parse("average"), InvalidArgument);
  CHECK_THROWS_AS(Strategy::ensemble(Combiner::direct), InvalidArgument);
}

TEST_CASE("run config validation") {
  auto c = base_config();
  CHECK_NOTHROW(c.validate());
  CHECK_NOTHROW(c.for_strategy(Strategy::direct()).validate());
  CHECK(c.for_strategy(Strategy::single("es")).pivots == std::vector<std::string>{"es"});
  c.pivots = {"en", "en"};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = base_config();
  c.strategy = Strategy::single("de");
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = base_config();
  c.strategy = Strategy::direct();
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = base_config();
  c.pivots.clear();
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = base_config();
  c.target_lang.clear();
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("pivot production") {
  RandomScorer scorer(kVocab, 21, 0.2);
  const auto corpus = random_corpus(10, 3);
  auto config = base_config();
  for (const auto& s : corpus.sentences) {
    const auto pivots = produce_pivots(s.source, config, scorer);
    REQUIRE(pivots.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(pivots[k].lang == config.pivots[k]);
      const auto own = beam_search(SourceSet({s.source}), config.pivots[k], scorer,
                                   config.pivot_decode);
      CHECK(pivots[k].tokens == own.hypotheses.front().tokens);
    }
  }
  config.include_direct_path = true;
  const auto& source = corpus.sentences.front().source;
  const auto with_source = produce_pivots(source, config, scorer);
  REQUIRE(with_source.size() == 4);
  CHECK(with_source[3].lang == "src");
  CHECK(with_source[3].tokens == source.tokens);
}

TEST_CASE("a single pivot is a one-member ensemble") {
  RandomScorer scorer(kVocab, 23, 0.2);
  const auto corpus = random_corpus(15, 4);
  auto config = base_config();
  for (const auto& s : corpus.sentences) {
    const auto single =
      translate_sentence(s.source, config.for_strategy(Strategy::single("fr")), scorer);
    auto one = config;
    one.pivots = {"fr"};
    for (const auto c : {Combiner::multiavg, Combiner::maxens, Combiner::logavg}) {
      one.strategy = Strategy::ensemble(c);
      const auto ens = translate_sentence(s.source, one, scorer);
      CHECK(ens.hypothesis.tokens == single.hypothesis.tokens);
      CHECK(std::abs(ens.hypothesis.score - single.hypothesis.score) <= 1e-12);
    }
  }
}

TEST_CASE("stages compose: translating equals decoding over produced pivots") {
  RandomScorer scorer(kVocab, 29, 0.2);
  const auto corpus = random_corpus(10, 5);
  auto config = base_config();
  for (const auto c : {Combiner::multiavg, Combiner::maxens}) {
    config.strategy = Strategy::ensemble(c);
    for (const auto& s : corpus.sentences) {
      const auto t = translate_sentence(s.source, config, scorer);
      const auto pivots = produce_pivots(s.source, config, scorer);
      auto params = config.final_decode;
      params.combiner = c;
      const auto r = beam_search(pivots, "tgt", scorer, params);
      CHECK(t.hypothesis.tokens == r.hypotheses.front().tokens);
      CHECK(t.hypothesis.score == r.hypotheses.front().score);
      CHECK(t.pivots.size() == 3);
    }
  }
}

TEST_CASE("direct translation uses the source alone") {
  RandomScorer scorer(kVocab, 31);
  const auto corpus = random_corpus(5, 6);
  const auto config = base_config().for_strategy(Strategy::direct());
  for (const auto& s : corpus.sentences) {
    const auto t = translate_sentence(s.source, config, scorer);
    CHECK(t.pivots.empty());
    const auto r = beam_search(SourceSet({s.source}), "tgt", scorer, config.final_decode);
    CHECK(t.hypothesis.tokens == r.hypotheses.front().tokens);
  }
}

TEST_CASE("corpus runs are deterministic across worker counts") {
  const auto corpus = random_corpus(24, 7);
  RandomBackend backend(37);
  const auto one = run_corpus(corpus, base_config(), kStrategies, backend, quick_options(1));
  const auto many = run_corpus(corpus, base_config(), kStrategies, backend, quick_options(8));
  CHECK(outputs_of(one) == outputs_of(many));
  REQUIRE(one.report);
  REQUIRE(many.report);
  CHECK(metrics::to_json(*one.report) == metrics::to_json(*many.report));
  CHECK(one.failures() == 0);
}

TEST_CASE("reports do not depend on corpus order") {
  auto corpus = random_corpus(20, 8);
  RandomBackend backend(41);
  const auto base = run_corpus(corpus, base_config(), kStrategies, backend, quick_options(2));
  RandomStream rng(1);
  for (int shuffle = 0; shuffle < 3; ++shuffle) {
    auto& s = corpus.sentences;
    for (std::size_t i = s.size() - 1; i > 0; --i)
      std::swap(s[i], s[rng.below(i + 1)]);
    const auto again = run_corpus(corpus, base_config(), kStrategies, backend, quick_options(2));
    CHECK(metrics::to_json(*again.report) == metrics::to_json(*base.report));
  }
}

TEST_CASE("failures are recorded per sentence and stage") {
  const auto corpus = random_corpus(20, 9);
  FlakyBackend backend;
  const auto run = run_corpus(corpus, base_config(), kStrategies, backend, quick_options(3));
  for (const auto& system : run.systems) {
    for (std::size_t i = 0; i < system.sentences.size(); ++i) {
      const auto& r = system.sentences[i];
      CHECK(r.id == corpus.sentences[i].id);
      const int n = std::stoi(r.id.substr(1));
      if (n % 5 == 4) {
        CHECK_FALSE(r.translation);
        CHECK(r.failed_stage == "setup");
      } else if (n % 5 == 1 && system.system != "direct" && system.system != "pivot:en") {
        CHECK_FALSE(r.translation);
        CHECK(r.failed_stage == "pivot:es");
        CHECK(r.error.find("pivot model offline") != std::string::npos);
      } else if (n % 5 == 2) {
        CHECK_FALSE(r.translation);
        CHECK(r.failed_stage == "final");
      } else {
        CHECK(r.translation);
      }
    }
  }
  REQUIRE(run.report);
  for (const auto& s : run.report->systems)
    CHECK(s.scored + s.failed == corpus.sentences.size());
  CHECK(run.report->at("direct").failed == 8);
  CHECK(run.report->at("maxens").failed == 12);

  std::ostringstream out;
  write_outputs_jsonl(out, run, "tgt", nullptr);
  std::istringstream in(out.str());
  const auto restored = read_outputs_jsonl(in);
  REQUIRE(restored.size() == kStrategies.size());
  CHECK(restored[3].sentences[1].failed_stage == "pivot:es");
}

TEST_CASE("identical systems tie") {
  const auto corpus = random_corpus(15, 10);
  RandomBackend backend(43);
  auto config = base_config();
  config.pivots = {"en"};
  const std::vector<Strategy> strategies{Strategy::ensemble(Combiner::multiavg),
                                         Strategy::ensemble(Combiner::maxens)};
  const auto run = run_corpus(corpus, config, strategies, backend, quick_options());
  const auto& r = *run.report;
  CHECK(r.at("multiavg").bleu == r.at("maxens").bleu);
  CHECK(r.is_best("multiavg"));
  CHECK(r.is_best("maxens"));
}

TEST_CASE("outputs survive a JSONL round trip") {
  const auto corpus = random_corpus(12, 11);
  RandomBackend backend(47);
  const auto run = run_corpus(corpus, base_config(), kStrategies, backend, quick_options(2));
  std::stringstream io(outputs_of(run));
  const auto restored = read_outputs_jsonl(io);
  REQUIRE(restored.size() == run.systems.size());
  for (std::size_t s = 0; s < restored.size(); ++s) {
    CHECK(restored[s].system == run.systems[s].system);
    for (std::size_t i = 0; i < restored[s].sentences.size(); ++i) {
      const auto& a = restored[s].sentences[i].translation->hypothesis;
      const auto& b = run.systems[s].sentences[i].translation->hypothesis;
      CHECK(a.tokens == b.tokens);
      CHECK(a.score == b.score);
      CHECK(a.step_scores == b.step_scores);
    }
  }
  const auto report = evaluate_outputs(corpus, restored, "src", "tgt", nullptr, kVocab - 1,
                                       quick_options().eval);
  CHECK(metrics::to_json(report) == metrics::to_json(*run.report));
}

TEST_CASE("corpus edge cases") {
  RandomBackend backend(53);
  CHECK_THROWS_AS(run_corpus(Corpus{}, base_config(), kStrategies, backend), InvalidArgument);
  const auto corpus = random_corpus(3, 12);
  CHECK_THROWS_AS(run_corpus(corpus, base_config(), {}, backend), InvalidArgument);
  const auto no_refs = random_corpus(3, 12, false);
  const auto run = run_corpus(no_refs, base_config(), kStrategies, backend, quick_options());
  CHECK_FALSE(run.report);
  CHECK(run.systems.size() == kStrategies.size());
}

TEST_CASE("corpus files") {
  std::istringstream in(R"({"id": "a", "lang": "de", "tokens": [1, 2, 3]}
{"id": "a", "lang": "zh", "text": "x y"}
{"id": "b", "lang": "de", "text": "hallo welt"}
{"id": "b", "lang": "en", "text": "hello world"}

{"id": "c", "lang": "de", "tokens": [4]}
)");
  const auto corpus = read_corpus(in, "de", "zh");
  REQUIRE(corpus.sentences.size() == 3);
  CHECK(corpus.sentences[0].reference->text.value() == "x y");
  CHECK_FALSE(corpus.sentences[1].reference);
  CHECK(corpus.sentences[1].source.text.value() == "hallo welt");
  CHECK(corpus.sentences[2].source.tokens == TokenSeq{4});

  std::istringstream dup(R"({"id": "a", "lang": "de", "tokens": [1]}
{"id": "a", "lang": "de", "tokens": [2]})");
  CHECK_THROWS_AS(read_corpus(dup, "de", "zh"), InvalidArgument);
  std::istringstream empty(R"({"id": "a", "lang": "de"})");
  CHECK_THROWS_AS(read_corpus(empty, "de", "zh"), InvalidArgument);
  std::istringstream garbage("{not json");
  CHECK_THROWS_AS(read_corpus(garbage, "de", "zh"), InvalidArgument);
  CHECK_THROWS(load_corpus("/nonexistent/corpus.jsonl", "de", "zh"));
}

TEST_CASE("run settings from TOML") {
  const auto s = run_settings_from_toml(R"(
source_lang = "de"
target_lang = "zh"
pivots = ["en", "fr"]
strategies = ["direct", "pivot:en", "maxens"]
workers = 4
[decode.final]
beam_size = 7
[eval]
chrf_threshold = 25.0
[endpoint]
base_url = "http://localhost:9000"
)");
  CHECK(s.run.pivots == std::vector<std::string>{"en", "fr"});
  REQUIRE(s.strategies.size() == 3);
  CHECK(s.strategies[1].id() == "pivot:en");
  CHECK(s.options.workers == 4);
  CHECK(s.run.final_decode.beam_size == 7);
  CHECK(s.options.eval.chrf_threshold == 25.0);
  CHECK_THROWS_AS(run_settings_from_toml("pivot = [\"en\"]\n"), InvalidArgument);
  CHECK_THROWS_AS(run_settings_from_toml("strategies = [\"best\"]\n"), InvalidArgument);
}
