#include "multipivot/synth.hpp"

#include <ostream>

#include "multipivot/pipeline.hpp"
#include "multipivot/serialize.hpp"

namespace multipivot::synth {

  using nlohmann::json;

  namespace {

    class TaskBackend : public Backend {
    public:
      explicit TaskBackend(const Task& task)
        : _task(task) {
      }

      std::shared_ptr<Scorer> scorer_for(const CorpusSentence& sentence) override {
        const SentencePlan* plan = _task.find(sentence.id);
        if (!plan)
          throw InvalidArgument("sentence '" + sentence.id + "' is not part of the task");
        return _task.scorer_for(*plan);
      }

      const Vocab* vocab() const override {
        return &_task.vocab();
      }

    private:
      const Task& _task;
    };

    Corpus task_corpus(const Task& task) {
      Corpus corpus;
      const auto& c = task.config();
      for (const auto& plan : task.sentences()) {
        CorpusSentence s;
        s.id = plan.id;
        s.source = SourceEntry{c.source_lang, plan.source, {}};
        s.reference = Reference{plan.reference, {}};
        corpus.sentences.push_back(std::move(s));
      }
      return corpus;
    }

  }

  ExperimentReport run_experiment(const ExperimentConfig& config) {
    const Task task(config);
    const Corpus corpus = task_corpus(task);
    TaskBackend backend(task);

    RunConfig run_config;
    run_config.source_lang = config.source_lang;
    run_config.target_lang = config.target_lang;
    run_config.pivots.clear();
    for (const auto& p : config.pivots)
      run_config.pivots.push_back(p.lang);
    run_config.pivot_decode = config.pivot_decode;
    run_config.final_decode = config.final_decode;

    std::vector<Strategy> strategies{Strategy::direct(),
                                     Strategy::ensemble(Combiner::multiavg),
                                     Strategy::ensemble(Combiner::maxens)};
    if (!config.single_pivot.empty())
      strategies.push_back(Strategy::single(config.single_pivot));

    RunOptions options;
    options.workers = config.workers;
    options.eval = config.eval;
    CorpusRun run = run_corpus(corpus, run_config, strategies, backend, options);
    for (const auto& system : run.systems) {
      for (const auto& s : system.sentences) {
        if (!s.translation)
          throw std::runtime_error("sentence '" + s.id + "' (" + system.system + "): " + s.error);
      }
    }

    ExperimentReport report;
    report.eval = std::move(*run.report);

    const auto& plans = task.sentences();
    for (std::size_t s = 0; s < run.systems.size(); ++s) {
      std::size_t flagged = 0;
      for (std::size_t i = 0; i < plans.size(); ++i) {
        if (task.is_ground_truth_hallucination(plans[i],
                                               run.systems[s].sentences[i].translation->hypothesis.tokens))
          ++flagged;
      }
      report.eval.systems[s].ground_truth_hallucination_rate =
        100.0 * static_cast<double>(flagged) / static_cast<double>(plans.size());
    }

    const auto system_index = [&](std::string_view id) {
      for (std::size_t s = 0; s < run.systems.size(); ++s) {
        if (run.systems[s].system == id)
          return s;
      }
      throw InvalidArgument("missing system " + std::string(id));
    };
    const std::size_t maxens = system_index("maxens");
    const std::size_t multiavg = system_index("multiavg");

    for (std::size_t i = 0; i < plans.size(); ++i) {
      const auto& plan = plans[i];
      SentenceOutcome outcome;
      outcome.id = plan.id;
      outcome.triggered = plan.triggered;
      outcome.honest_pivot = config.pivots[plan.honest_pivot].lang;
      outcome.source = plan.source;
      outcome.reference = plan.reference;
      outcome.pivots = run.systems[maxens].sentences[i].translation->pivots;
      for (const auto& system : run.systems) {
        const auto& hyp = system.sentences[i].translation->hypothesis;
        outcome.outputs.emplace_back(system.system, hyp);
        if (task.is_ground_truth_hallucination(plan, hyp.tokens))
          outcome.hallucinated.push_back(system.system);
      }

      if (plan.triggered) {
        auto scorer = task.scorer_for(plan);
        const RunConfig single = run_config.for_strategy(Strategy::single(outcome.honest_pivot));
        const Translation confident =
          translate_sentence(corpus.sentences[i].source, single, *scorer);
        const auto& tokens = confident.hypothesis.tokens;
        ++report.agreement.triggered;
        if (run.systems[maxens].sentences[i].translation->hypothesis.tokens == tokens)
          ++report.agreement.maxens_matches;
        if (run.systems[multiavg].sentences[i].translation->hypothesis.tokens == tokens)
          ++report.agreement.multiavg_matches;
        outcome.confident_pivot_output = confident.hypothesis;
      }
      report.sentences.push_back(std::move(outcome));
    }
    return report;
  }

  json ExperimentReport::to_json() const {
    return json{{"eval", metrics::to_json(eval)},
                {"confident_pivot_agreement",
                 {{"triggered", agreement.triggered},
                  {"maxens_matches", agreement.maxens_matches},
                  {"multiavg_matches", agreement.multiavg_matches}}}};
  }

  void write_sentence_dump(std::ostream& out, const ExperimentReport& report, const Vocab& vocab) {
    for (const auto& s : report.sentences) {
      json pivots = json::array();
      for (const auto& p : s.pivots)
        pivots.push_back({{"lang", p.lang}, {"tokens", p.tokens}, {"text", vocab.decode(p.tokens)}});
      json outputs = json::object();
      for (const auto& [system, hyp] : s.outputs) {
        if (!hyp) {
          outputs[system] = nullptr;
          continue;
        }
        outputs[system] = {{"tokens", hyp->tokens},
                           {"text", vocab.decode(hyp->tokens)},
                           {"score", encode_logvalue(hyp->score)},
                           {"provenance", hyp->provenance}};
      }
      json line{{"id", s.id},
                {"triggered", s.triggered},
                {"honest_pivot", s.honest_pivot},
                {"source", vocab.decode(s.source)},
                {"reference", vocab.decode(s.reference)},
                {"pivots", std::move(pivots)},
                {"outputs", std::move(outputs)},
                {"hallucinated", s.hallucinated}};
      if (s.confident_pivot_output)
        line["confident_pivot_output"] = vocab.decode(s.confident_pivot_output->tokens);
      out << line.dump() << '\n';
    }
  }

}
