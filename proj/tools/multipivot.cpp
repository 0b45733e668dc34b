#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "multipivot/modelwire.hpp"
#include "multipivot/pipeline.hpp"
#include "multipivot/synth.hpp"

using namespace multipivot;

namespace {

  enum ExitCode {
    kOk = 0,
    kUsage = 1,
    kBackend = 2,
    kPartial = 3,
  };

  std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    for (const char c : value + ",") {
      if (c == ',') {
        if (!item.empty())
          out.push_back(item);
        item.clear();
      } else if (c != ' ') {
        item += c;
      }
    }
    return out;
  }

  std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  }

  std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out)
      throw std::runtime_error("cannot write '" + path + "'");
    return out;
  }

  class SyntheticBackend : public Backend {
  public:
    explicit SyntheticBackend(synth::Task task)
      : _task(std::move(task)) {
    }

    std::shared_ptr<Scorer> scorer_for(const CorpusSentence& sentence) override {
      const auto* plan = _task.find(sentence.id);
      if (!plan)
        throw InvalidArgument("sentence '" + sentence.id + "' is not part of the synthetic task");
      return _task.scorer_for(*plan);
    }

    const Vocab* vocab() const override {
      return &_task.vocab();
    }

    const synth::Task& task() const {
      return _task;
    }

  private:
    synth::Task _task;
  };

  class RemoteBackend : public Backend {
  public:
    explicit RemoteBackend(std::shared_ptr<wire::Client> client)
      : _scorer(std::make_shared<wire::WireScorer>(std::move(client))) {
    }

    std::shared_ptr<Scorer> scorer_for(const CorpusSentence&) override {
      return _scorer;
    }

    TokenId eos_id() const override {
      return _scorer->eos_id();
    }

  private:
    std::shared_ptr<wire::WireScorer> _scorer;
  };

  struct EvalFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> resamples;
    std::optional<double> alpha;

    void add(CLI::App* app) {
      app->add_option("--seed", seed, "Bootstrap resampling seed");
      app->add_option("--resamples", resamples, "Bootstrap resamples");
      app->add_option("--alpha", alpha, "Significance level");
    }

    void apply(metrics::EvalOptions& eval) const {
      if (seed)
        eval.bootstrap.seed = *seed;
      if (resamples)
        eval.bootstrap.resamples = *resamples;
      if (alpha)
        eval.bootstrap.alpha = *alpha;
      eval.bootstrap.validate();
    }
  };

  // ------------------------------------------------------------------ translate

  struct TranslateArgs {
    std::string corpus;
    std::string config;
    std::string source_lang;
    std::string target_lang;
    std::string pivots;
    std::vector<std::string> strategies;
    std::optional<std::size_t> beam;
    std::optional<std::size_t> pivot_beam;
    std::optional<std::size_t> max_len;
    std::optional<std::string> length_norm;
    bool include_direct = false;
    std::optional<std::size_t> workers;
    std::string endpoint;
    std::string synthetic;
    std::string output;
    std::string report;
    bool no_eval = false;
    EvalFlags eval;
  };

  int run_translate(const TranslateArgs& args) {
    RunSettings settings;
    std::optional<wire::EndpointConfig> endpoint;
    if (!args.config.empty()) {
      const std::string text = read_text(args.config);
      settings = run_settings_from_toml(text);
      endpoint = wire::endpoint_config_from_toml(text);
    }
    auto& run = settings.run;
    if (!args.source_lang.empty())
      run.source_lang = args.source_lang;
    if (!args.target_lang.empty())
      run.target_lang = args.target_lang;
    if (!args.pivots.empty())
      run.pivots = split_list(args.pivots);
    if (!args.strategies.empty()) {
      settings.strategies.clear();
      for (const auto& s : args.strategies)
        settings.strategies.push_back(Strategy::parse(s));
    }
    if (settings.strategies.empty())
      settings.strategies.push_back(run.strategy);
    if (args.beam)
      run.final_decode.beam_size = *args.beam;
    if (args.pivot_beam)
      run.pivot_decode.beam_size = *args.pivot_beam;
    if (args.max_len) {
      run.final_decode.max_len = *args.max_len;
      run.pivot_decode.max_len = *args.max_len;
    }
    if (args.length_norm) {
      run.final_decode.length_normalization = length_normalization_from_string(*args.length_norm);
      run.pivot_decode.length_normalization = run.final_decode.length_normalization;
    }
    if (args.include_direct)
      run.include_direct_path = true;
    if (args.workers)
      settings.options.workers = *args.workers;
    settings.options.evaluate = !args.no_eval;
    args.eval.apply(settings.options.eval);
    if (run.source_lang.empty() || run.target_lang.empty())
      throw InvalidArgument("--src and --tgt are required");

    std::unique_ptr<Backend> backend;
    if (!args.synthetic.empty()) {
      backend = std::make_unique<SyntheticBackend>(
        synth::Task(synth::load_experiment_config(args.synthetic)));
    } else {
      wire::EndpointConfig config = endpoint.value_or(wire::EndpointConfig{});
      if (!args.endpoint.empty())
        config.base_url = args.endpoint;
      backend = std::make_unique<RemoteBackend>(std::make_shared<wire::Client>(config));
    }

    const Corpus corpus = load_corpus(args.corpus, run.source_lang, run.target_lang);
    if (corpus.sentences.empty())
      throw InvalidArgument("corpus has no '" + run.source_lang + "' sentences");
    const CorpusRun result = run_corpus(corpus, run, settings.strategies, *backend, settings.options);

    if (args.output.empty()) {
      write_outputs_jsonl(std::cout, result, run.target_lang, backend->vocab());
    } else {
      auto out = open_output(args.output);
      write_outputs_jsonl(out, result, run.target_lang, backend->vocab());
    }
    if (result.report) {
      std::cerr << metrics::render_tables(std::span(&*result.report, 1));
      if (!args.report.empty())
        open_output(args.report) << metrics::to_json(*result.report).dump(2) << '\n';
    }
    if (const std::size_t failures = result.failures()) {
      std::cerr << failures << " sentence translations failed\n";
      for (const auto& system : result.systems) {
        for (const auto& s : system.sentences) {
          if (!s.translation)
            std::cerr << "  " << system.system << " " << s.id << ": " << s.error << '\n';
        }
      }
      return kPartial;
    }
    return kOk;
  }

  // ------------------------------------------------------------------ evaluate

  struct EvaluateArgs {
    std::string corpus;
    std::vector<std::string> outputs;
    std::string source_lang;
    std::string target_lang;
    TokenId eos = -1;
    std::string synthetic;
    std::string report;
    EvalFlags eval;
  };

  int run_evaluate(const EvaluateArgs& args) {
    const Corpus corpus = load_corpus(args.corpus, args.source_lang, args.target_lang);
    std::vector<SystemResults> systems;
    for (const auto& path : args.outputs) {
      std::ifstream in(path);
      if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
      for (auto& s : read_outputs_jsonl(in))
        systems.push_back(std::move(s));
    }
    std::optional<synth::Task> task;
    if (!args.synthetic.empty())
      task.emplace(synth::load_experiment_config(args.synthetic));
    const Vocab* vocab = task ? &task->vocab() : nullptr;
    const TokenId eos = vocab ? vocab->eos_id() : args.eos;

    metrics::EvalOptions options;
    args.eval.apply(options);
    const auto report =
      evaluate_outputs(corpus, systems, args.source_lang, args.target_lang, vocab, eos, options);
    std::cout << metrics::render_tables(std::span(&report, 1));
    if (!args.report.empty())
      open_output(args.report) << metrics::to_json(report).dump(2) << '\n';
    for (const auto& s : report.systems) {
      if (s.failed > 0)
        return kPartial;
    }
    return kOk;
  }

  // ------------------------------------------------------------------ simulate

  struct SimulateArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> corpus_size;
    std::optional<std::size_t> workers;
    std::string report;
    std::string dump;
    std::string corpus;
  };

  int run_simulate(const SimulateArgs& args) {
    synth::ExperimentConfig config =
      args.config.empty() ? synth::ExperimentConfig{} : synth::load_experiment_config(args.config);
    if (args.seed)
      config.seed = *args.seed;
    if (args.corpus_size)
      config.corpus_size = *args.corpus_size;
    if (args.workers)
      config.workers = *args.workers;
    config.validate();

    if (!args.corpus.empty())
      open_output(args.corpus) << synth::Task(config).corpus_jsonl();

    const auto report = synth::run_experiment(config);
    std::cout << metrics::render_tables(std::span(&report.eval, 1));
    std::cout << "\nTriggered sentences matching the confident pivot: "
              << report.agreement.triggered << " triggered, MaxEns "
              << report.agreement.maxens_matches << ", MultiAvg "
              << report.agreement.multiavg_matches << '\n';
    if (!args.report.empty())
      open_output(args.report) << report.to_json().dump(2) << '\n';
    if (!args.dump.empty()) {
      auto out = open_output(args.dump);
      synth::write_sentence_dump(out, report, synth::Task(config).vocab());
    }
    return kOk;
  }

  // ------------------------------------------------------------------ compare

  struct CompareArgs {
    std::string corpus;
    std::string a;
    std::string b;
    std::string system_a;
    std::string system_b;
    std::string source_lang;
    std::string target_lang;
    TokenId eos = -1;
    EvalFlags eval;
  };

  const SystemResults& pick_system(const std::vector<SystemResults>& systems,
                                   const std::string& name,
                                   const std::string& path) {
    if (name.empty()) {
      if (systems.size() != 1)
        throw InvalidArgument("'" + path + "' holds " + std::to_string(systems.size())
                              + " systems; choose one with --system-a/--system-b");
      return systems.front();
    }
    for (const auto& s : systems) {
      if (s.system == name)
        return s;
    }
    throw InvalidArgument("no system '" + name + "' in '" + path + "'");
  }

  int run_compare(const CompareArgs& args) {
    const Corpus corpus = load_corpus(args.corpus, args.source_lang, args.target_lang);
    const auto load = [](const std::string& path) {
      std::ifstream in(path);
      if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
      return read_outputs_jsonl(in);
    };
    const auto systems_a = load(args.a);
    const auto systems_b = load(args.b);
    const auto& a = pick_system(systems_a, args.system_a, args.a);
    const auto& b = pick_system(systems_b, args.system_b, args.b);

    const auto index = [](const SystemResults& s) {
      std::map<std::string, const Translation*> out;
      for (const auto& r : s.sentences) {
        if (r.translation)
          out.emplace(r.id, &*r.translation);
      }
      return out;
    };
    const auto by_id_a = index(a);
    const auto by_id_b = index(b);

    std::vector<const CorpusSentence*> order;
    for (const auto& s : corpus.sentences)
      order.push_back(&s);
    std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->id < y->id; });

    std::vector<metrics::BleuStats> stats_a, stats_b;
    std::size_t skipped = 0;
    for (const auto* s : order) {
      auto ia = by_id_a.find(s->id);
      auto ib = by_id_b.find(s->id);
      if (ia == by_id_a.end() || ib == by_id_b.end() || !s->reference) {
        ++skipped;
        continue;
      }
      const auto ref = s->reference->tokens.empty()
                         ? metrics::tokenize(s->reference->text.value_or(""))
                         : render_words(s->reference->tokens, nullptr, args.eos);
      stats_a.push_back(metrics::bleu_stats(render_words(ia->second->hypothesis.tokens, nullptr, args.eos), ref));
      stats_b.push_back(metrics::bleu_stats(render_words(ib->second->hypothesis.tokens, nullptr, args.eos), ref));
    }
    if (stats_a.empty())
      throw InvalidArgument("no sentence was translated by both systems");

    metrics::EvalOptions options;
    args.eval.apply(options);
    const auto verdict = metrics::paired_bootstrap_bleu(stats_a, stats_b, options.bootstrap);
    std::printf("A %-20s BLEU %.2f\n", a.system.c_str(), verdict.score_a);
    std::printf("B %-20s BLEU %.2f\n", b.system.c_str(), verdict.score_b);
    std::printf("sentences %zu (skipped %zu)\n", stats_a.size(), skipped);
    std::printf("winner %s  p = %.4f  %s at alpha %g\n",
                std::string(metrics::to_string(verdict.winner)).c_str(), verdict.p_value,
                verdict.significant ? "significant" : "not significant", options.bootstrap.alpha);
    return skipped > 0 ? kPartial : kOk;
  }

}

int main(int argc, char** argv) {
  CLI::App app{"Multi-pivot ensemble decoding and MT evaluation"};
  app.require_subcommand(1);

  TranslateArgs translate;
  auto* cmd_translate = app.add_subcommand("translate", "Translate a JSONL corpus");
  cmd_translate->add_option("--corpus", translate.corpus, "JSONL corpus")->required();
  cmd_translate->add_option("--config", translate.config, "TOML run settings");
  cmd_translate->add_option("--src", translate.source_lang, "Source language");
  cmd_translate->add_option("--tgt", translate.target_lang, "Target language");
  cmd_translate->add_option("--pivots", translate.pivots, "Comma-separated pivot languages");
  cmd_translate->add_option("--strategy", translate.strategies,
                            "direct, multiavg, maxens, logavg or pivot:<lang> (repeatable)");
  cmd_translate->add_option("--beam", translate.beam, "Final-stage beam size");
  cmd_translate->add_option("--pivot-beam", translate.pivot_beam, "Pivot-stage beam size");
  cmd_translate->add_option("--max-len", translate.max_len, "Maximum output length");
  cmd_translate->add_option("--length-norm", translate.length_norm, "none or by_length");
  cmd_translate->add_flag("--include-direct", translate.include_direct,
                          "Add the source itself to the ensemble");
  cmd_translate->add_option("--workers", translate.workers, "Worker threads");
  cmd_translate->add_option("--endpoint", translate.endpoint, "Model server URL");
  cmd_translate->add_option("--synthetic", translate.synthetic,
                            "Use the synthetic channels of this experiment config");
  cmd_translate->add_option("--output", translate.output, "Output JSONL (default stdout)");
  cmd_translate->add_option("--report", translate.report, "Write the JSON report here");
  cmd_translate->add_flag("--no-eval", translate.no_eval, "Skip evaluation");
  translate.eval.add(cmd_translate);

  EvaluateArgs evaluate;
  auto* cmd_evaluate = app.add_subcommand("evaluate", "Score output files against references");
  cmd_evaluate->add_option("--corpus", evaluate.corpus, "JSONL corpus with references")->required();
  cmd_evaluate->add_option("--outputs", evaluate.outputs, "Output JSONL files")->required();
  cmd_evaluate->add_option("--src", evaluate.source_lang, "Source language")->required();
  cmd_evaluate->add_option("--tgt", evaluate.target_lang, "Target language")->required();
  cmd_evaluate->add_option("--eos", evaluate.eos, "eos id to drop before scoring");
  cmd_evaluate->add_option("--synthetic", evaluate.synthetic, "Take the vocabulary from this experiment config");
  cmd_evaluate->add_option("--report", evaluate.report, "Write the JSON report here");
  evaluate.eval.add(cmd_evaluate);

  SimulateArgs simulate;
  auto* cmd_simulate = app.add_subcommand("simulate", "Run the synthetic study");
  cmd_simulate->add_option("--config", simulate.config, "TOML experiment config");
  cmd_simulate->add_option("--seed", simulate.seed, "Task seed");
  cmd_simulate->add_option("--corpus-size", simulate.corpus_size, "Number of sentences");
  cmd_simulate->add_option("--workers", simulate.workers, "Worker threads");
  cmd_simulate->add_option("--report", simulate.report, "Write the JSON report here");
  cmd_simulate->add_option("--dump", simulate.dump, "Write per-sentence JSONL here");
  cmd_simulate->add_option("--corpus", simulate.corpus, "Write the task corpus JSONL here");

  CompareArgs compare;
  auto* cmd_compare = app.add_subcommand("compare", "Paired bootstrap between two output files");
  cmd_compare->add_option("--corpus", compare.corpus, "JSONL corpus with references")->required();
  cmd_compare->add_option("--a", compare.a, "First output file")->required();
  cmd_compare->add_option("--b", compare.b, "Second output file")->required();
  cmd_compare->add_option("--system-a", compare.system_a, "System id inside the first file");
  cmd_compare->add_option("--system-b", compare.system_b, "System id inside the second file");
  cmd_compare->add_option("--src", compare.source_lang, "Source language")->required();
  cmd_compare->add_option("--tgt", compare.target_lang, "Target language")->required();
  cmd_compare->add_option("--eos", compare.eos, "eos id to drop before scoring");
  compare.eval.add(cmd_compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*cmd_translate)
      return run_translate(translate);
    if (*cmd_evaluate)
      return run_evaluate(evaluate);
    if (*cmd_simulate)
      return run_simulate(simulate);
    if (*cmd_compare)
      return run_compare(compare);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBackend;
  }
  return kUsage;
}
