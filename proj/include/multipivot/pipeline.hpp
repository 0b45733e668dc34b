#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "multipivot/core.hpp"
#include "multipivot/decoder.hpp"
#include "multipivot/metrics.hpp"

namespace multipivot {

  struct Strategy {
    enum class Kind {
      direct,
      single_pivot,
      multiavg,
      maxens,
      logavg,
    };

    Kind kind = Kind::direct;
    std::string pivot;  // single_pivot only

    // "direct", "multiavg", "maxens", "logavg", or "pivot:<lang>".
    std::string id() const;
    static Strategy parse(std::string_view id);

    static Strategy direct() {
      return {Kind::direct, {}};
    }
    static Strategy single(std::string lang) {
      return {Kind::single_pivot, std::move(lang)};
    }
    static Strategy ensemble(Combiner combiner);
  };

  struct RunConfig {
    std::string source_lang;
    std::string target_lang;
    std::vector<std::string> pivots = {"en", "es", "fr"};
    Strategy strategy = Strategy::ensemble(Combiner::maxens);
    // Also condition the final stage on the original source.
    bool include_direct_path = false;
    DecodeParams pivot_decode{5, 256, Combiner::direct};
    DecodeParams final_decode{5, 256, Combiner::direct};

    void validate() const;

    // Copy adjusted so that `strategy` is valid: no pivots for direct, the one
    // named pivot for single_pivot.
    RunConfig for_strategy(const Strategy& strategy) const;
  };

  // A failure attributed to one stage: "pivot:<lang>" or "final".
  class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what)
      , _stage(std::move(stage)) {
    }

    const std::string& stage() const {
      return _stage;
    }

  private:
    std::string _stage;
  };

  // Translates the source into every pivot (top beam hypothesis each) and
  // returns them in config order, plus the source itself when
  // include_direct_path is set.
  SourceSet produce_pivots(const SourceEntry& source, const RunConfig& config, Scorer& scorer);

  struct Translation {
    Hypothesis hypothesis;
    bool finished = false;
    std::vector<SourceEntry> pivots;
    DecodeTrace trace;
  };

  Translation translate_sentence(const SourceEntry& source,
                                 const RunConfig& config,
                                 Scorer& scorer,
                                 bool record_trace = false);

  // ---------------------------------------------------------------- corpora

  struct Reference {
    TokenSeq tokens;
    std::optional<std::string> text;
  };

  struct CorpusSentence {
    std::string id;
    SourceEntry source;
    std::optional<Reference> reference;
  };

  // Sentences in the source language, paired by id with target-language
  // reference lines when present.
  struct Corpus {
    std::vector<CorpusSentence> sentences;
  };

  Corpus read_corpus(std::istream& in, std::string_view source_lang, std::string_view target_lang);
  Corpus load_corpus(const std::string& path,
                     std::string_view source_lang,
                     std::string_view target_lang);

  class Backend {
  public:
    virtual ~Backend() = default;

    // Scorer to use for one sentence. Must be safe to call concurrently.
    virtual std::shared_ptr<Scorer> scorer_for(const CorpusSentence& sentence) = 0;

    // Vocabulary for rendering tokens as text, when the backend has one.
    virtual const Vocab* vocab() const {
      return nullptr;
    }

    // Dropped from outputs before scoring; -1 when unknown.
    virtual TokenId eos_id() const {
      return vocab() ? vocab()->eos_id() : -1;
    }
  };

  struct SentenceResult {
    std::string id;
    std::string system;
    std::optional<Translation> translation;
    std::string error;
    std::string failed_stage;
  };

  struct SystemResults {
    std::string system;
    std::vector<SentenceResult> sentences;  // corpus order

    std::size_t failures() const;
  };

  struct RunOptions {
    std::size_t workers = 1;
    bool evaluate = true;
    metrics::EvalOptions eval;
  };

  struct CorpusRun {
    std::vector<SystemResults> systems;
    std::optional<metrics::EvalReport> report;

    std::size_t failures() const;
  };

  CorpusRun run_corpus(const Corpus& corpus,
                       const RunConfig& config,
                       std::span<const Strategy> strategies,
                       Backend& backend,
                       const RunOptions& options = {});

  // TOML run settings: top-level source_lang, target_lang, pivots, strategies,
  // include_direct_path, workers; tables [decode.pivot], [decode.final], [eval].
  struct RunSettings {
    RunConfig run;
    std::vector<Strategy> strategies;
    RunOptions options;
  };

  RunSettings run_settings_from_toml(std::string_view toml_text);
  RunSettings load_run_settings(const std::string& path);

  // Token text for metrics: vocab strings when known, decimal ids otherwise.
  metrics::Words render_words(std::span<const TokenId> tokens, const Vocab* vocab, TokenId eos_id);

  // Output lines: one JSON object per (system, sentence).
  nlohmann::json output_record(const SentenceResult& result,
                               std::string_view target_lang,
                               const Vocab* vocab);
  void write_outputs_jsonl(std::ostream& out,
                           const CorpusRun& run,
                           std::string_view target_lang,
                           const Vocab* vocab);

  // Rebuilds per-system results from output lines (no traces).
  std::vector<SystemResults> read_outputs_jsonl(std::istream& in);

  metrics::EvalReport evaluate_outputs(const Corpus& corpus,
                                       std::span<const SystemResults> systems,
                                       std::string_view source_lang,
                                       std::string_view target_lang,
                                       const Vocab* vocab,
                                       TokenId eos_id,
                                       const metrics::EvalOptions& options = {});

}
