#include "multipivot/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

namespace multipivot {

  std::string Strategy::id() const {
    switch (kind) {
    case Kind::direct:
      return "direct";
    case Kind::single_pivot:
      return "pivot:" + pivot;
    case Kind::multiavg:
      return "multiavg";
    case Kind::maxens:
      return "maxens";
    case Kind::logavg:
      return "logavg";
    }
    return "unknown";
  }

  Strategy Strategy::parse(std::string_view id) {
    if (id == "direct")
      return direct();
    if (id == "multiavg")
      return ensemble(Combiner::multiavg);
    if (id == "maxens")
      return ensemble(Combiner::maxens);
    if (id == "logavg")
      return ensemble(Combiner::logavg);
    for (const std::string_view prefix : {"pivot:", "single_pivot:"}) {
      if (id.starts_with(prefix) && id.size() > prefix.size())
        return single(std::string(id.substr(prefix.size())));
    }
    throw InvalidArgument("unknown strategy '" + std::string(id) + "'");
  }

  Strategy Strategy::ensemble(Combiner combiner) {
    switch (combiner) {
    case Combiner::multiavg:
      return {Kind::multiavg, {}};
    case Combiner::maxens:
      return {Kind::maxens, {}};
    case Combiner::logavg:
      return {Kind::logavg, {}};
    case Combiner::direct:
      break;
    }
    throw InvalidArgument("not an ensemble combiner: " + std::string(to_string(combiner)));
  }

  static Combiner final_combiner(const Strategy& strategy) {
    switch (strategy.kind) {
    case Strategy::Kind::multiavg:
      return Combiner::multiavg;
    case Strategy::Kind::maxens:
      return Combiner::maxens;
    case Strategy::Kind::logavg:
      return Combiner::logavg;
    default:
      return Combiner::direct;
    }
  }

  void RunConfig::validate() const {
    if (source_lang.empty() || target_lang.empty())
      throw InvalidArgument("source and target languages are required");
    pivot_decode.validate();
    final_decode.validate();
    for (std::size_t i = 0; i < pivots.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (pivots[i] == pivots[j])
          throw InvalidArgument("duplicate pivot '" + pivots[i] + "'");
      }
      if (include_direct_path && pivots[i] == source_lang)
        throw InvalidArgument("pivot equals the source language while the direct path is included");
    }
    switch (strategy.kind) {
    case Strategy::Kind::direct:
      if (!pivots.empty())
        throw InvalidArgument("direct strategy takes no pivots");
      break;
    case Strategy::Kind::single_pivot:
      if (strategy.pivot.empty())
        throw InvalidArgument("single-pivot strategy must name its pivot");
      if (pivots.size() != 1 || pivots.front() != strategy.pivot)
        throw InvalidArgument("single-pivot strategy must use exactly its pivot");
      break;
    default:
      if (pivots.empty())
        throw InvalidArgument("ensemble strategies need at least one pivot");
      break;
    }
  }

  RunConfig RunConfig::for_strategy(const Strategy& s) const {
    RunConfig config = *this;
    config.strategy = s;
    if (s.kind == Strategy::Kind::direct) {
      config.pivots.clear();
      config.include_direct_path = false;
    } else if (s.kind == Strategy::Kind::single_pivot) {
      config.pivots = {s.pivot};
      config.include_direct_path = false;
    }
    return config;
  }

  SourceSet produce_pivots(const SourceEntry& source, const RunConfig& config, Scorer& scorer) {
    if (config.pivots.empty())
      throw InvalidArgument("no pivot languages configured");
    DecodeParams params = config.pivot_decode;
    params.combiner = Combiner::direct;

    const SourceSet input({source});
    std::vector<SourceEntry> entries;
    entries.reserve(config.pivots.size() + 1);
    for (const auto& lang : config.pivots) {
      DecodeResult result;
      try {
        result = beam_search(input, lang, scorer, params);
      } catch (const std::exception& e) {
        throw StageError("pivot:" + lang, e.what());
      }
      if (result.hypotheses.empty())
        throw StageError("pivot:" + lang, "no hypothesis with finite score");
      entries.push_back(SourceEntry{lang, std::move(result.hypotheses.front().tokens), {}});
    }
    if (config.include_direct_path)
      entries.push_back(source);
    return SourceSet(std::move(entries));
  }

  Translation translate_sentence(const SourceEntry& source,
                                 const RunConfig& config,
                                 Scorer& scorer,
                                 bool record_trace) {
    config.validate();
    DecodeParams params = config.final_decode;
    params.combiner = final_combiner(config.strategy);

    Translation translation;
    std::optional<SourceSet> sources;
    if (config.strategy.kind == Strategy::Kind::direct) {
      sources.emplace(std::vector<SourceEntry>{source});
    } else {
      sources.emplace(produce_pivots(source, config, scorer));
      translation.pivots = sources->entries();
    }

    DecodeResult result;
    try {
      result = beam_search(*sources, config.target_lang, scorer, params, record_trace);
    } catch (const std::exception& e) {
      throw StageError("final", e.what());
    }
    if (result.hypotheses.empty())
      throw StageError("final", "no hypothesis with finite score");
    translation.hypothesis = std::move(result.hypotheses.front());
    translation.finished = result.finished;
    translation.trace = std::move(result.trace);
    return translation;
  }

  std::size_t SystemResults::failures() const {
    return static_cast<std::size_t>(std::count_if(
      sentences.begin(), sentences.end(), [](const auto& s) { return !s.translation; }));
  }

  std::size_t CorpusRun::failures() const {
    std::size_t total = 0;
    for (const auto& s : systems)
      total += s.failures();
    return total;
  }

  metrics::Words render_words(std::span<const TokenId> tokens, const Vocab* vocab, TokenId eos_id) {
    metrics::Words words;
    words.reserve(tokens.size());
    for (const TokenId t : tokens) {
      if (t == eos_id)
        continue;
      words.push_back(vocab ? vocab->token(t) : std::to_string(t));
    }
    return words;
  }

  static std::string join_words(const metrics::Words& words) {
    std::string text;
    for (const auto& w : words) {
      if (!text.empty())
        text += ' ';
      text += w;
    }
    return text;
  }

  CorpusRun run_corpus(const Corpus& corpus,
                       const RunConfig& config,
                       std::span<const Strategy> strategies,
                       Backend& backend,
                       const RunOptions& options) {
    if (corpus.sentences.empty())
      throw InvalidArgument("corpus is empty");
    if (strategies.empty())
      throw InvalidArgument("no strategies to run");

    std::vector<RunConfig> configs;
    for (const auto& s : strategies) {
      configs.push_back(config.for_strategy(s));
      configs.back().validate();
    }

    const std::size_t num_sentences = corpus.sentences.size();
    CorpusRun run;
    for (const auto& s : strategies) {
      SystemResults results;
      results.system = s.id();
      results.sentences.resize(num_sentences);
      run.systems.push_back(std::move(results));
    }

    // One work item per (sentence, strategy); each writes its own slot.
    const std::size_t num_items = num_sentences * strategies.size();
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t item = next++; item < num_items; item = next++) {
        const std::size_t i = item / strategies.size();
        const std::size_t s = item % strategies.size();
        const auto& sentence = corpus.sentences[i];
        SentenceResult& slot = run.systems[s].sentences[i];
        slot.id = sentence.id;
        slot.system = run.systems[s].system;
        try {
          auto scorer = backend.scorer_for(sentence);
          slot.translation = translate_sentence(sentence.source, configs[s], *scorer);
        } catch (const StageError& e) {
          slot.error = e.what();
          slot.failed_stage = e.stage();
        } catch (const std::exception& e) {
          slot.error = e.what();
          slot.failed_stage = "setup";
        }
      }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, num_items));
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(worker);
    }

    if (options.evaluate) {
      const bool has_refs = std::all_of(corpus.sentences.begin(), corpus.sentences.end(),
                                        [](const auto& s) { return s.reference.has_value(); });
      if (has_refs) {
        run.report = evaluate_outputs(corpus, run.systems, config.source_lang,
                                      config.target_lang, backend.vocab(), backend.eos_id(),
                                      options.eval);
      }
    }
    return run;
  }

  metrics::EvalReport evaluate_outputs(const Corpus& corpus,
                                       std::span<const SystemResults> systems,
                                       std::string_view source_lang,
                                       std::string_view target_lang,
                                       const Vocab* vocab,
                                       TokenId eos_id,
                                       const metrics::EvalOptions& options) {
    if (corpus.sentences.empty())
      throw InvalidArgument("corpus is empty");

    // Sorted by id so the report does not depend on corpus order.
    std::vector<const CorpusSentence*> order;
    for (const auto& s : corpus.sentences)
      order.push_back(&s);
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->id < b->id; });

    std::vector<metrics::EvalSentence> sentences;
    sentences.reserve(order.size());
    for (const auto* sp : order) {
      const auto& s = *sp;
      if (!s.reference)
        throw InvalidArgument("sentence '" + s.id + "' has no reference");
      metrics::EvalSentence e;
      e.id = s.id;
      e.source = s.source.tokens.empty() && s.source.text
                   ? metrics::tokenize(*s.source.text)
                   : render_words(s.source.tokens, vocab, eos_id);
      if (!s.reference->tokens.empty()) {
        e.reference = render_words(s.reference->tokens, vocab, eos_id);
        e.reference_text = join_words(e.reference);
      } else if (s.reference->text) {
        e.reference = metrics::tokenize(*s.reference->text);
        e.reference_text = *s.reference->text;
      }
      sentences.push_back(std::move(e));
    }

    std::vector<metrics::SystemRun> runs;
    for (const auto& system : systems) {
      metrics::SystemRun run;
      run.system = system.system;
      // Align by id; a sentence missing from the outputs counts as failed.
      std::map<std::string_view, const SentenceResult*> by_id;
      for (const auto& r : system.sentences)
        by_id.emplace(r.id, &r);
      for (const auto* s : order) {
        auto it = by_id.find(s->id);
        if (it == by_id.end() || !it->second->translation) {
          run.outputs.emplace_back();
          continue;
        }
        metrics::SystemOutput out;
        out.tokens = render_words(it->second->translation->hypothesis.tokens, vocab, eos_id);
        out.text = join_words(out.tokens);
        run.outputs.emplace_back(std::move(out));
      }
      runs.push_back(std::move(run));
    }
    return metrics::evaluate(source_lang, target_lang, sentences, runs, options);
  }

}
