#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "multipivot/combiners.hpp"
#include "multipivot/core.hpp"

namespace multipivot {

  // One next-token query: p(. | prefix, source) for a language pair.
  struct StepQuery {
    const SourceEntry* source = nullptr;
    std::string_view target_lang;
    std::span<const TokenId> prefix;
  };

  // Provider of next-token distributions. Implementations must be deterministic:
  // the same (source, prefix) query yields the same distribution within a session.
  class Scorer {
  public:
    virtual ~Scorer() = default;

    virtual std::size_t vocab_size() const = 0;
    virtual TokenId eos_id() const = 0;

    // One distribution per query, in query order.
    virtual std::vector<StepDistribution> score(std::span<const StepQuery> queries) = 0;
  };

  struct TraceExpansion {
    std::size_t parent = 0;  // index into the active beam at the start of the step
    TokenId token = 0;
    double step_score = 0;
    double total_score = 0;
    bool finished = false;
    int provenance = -1;  // MaxEns source index, -1 otherwise
  };

  struct TraceStep {
    std::size_t step = 0;
    std::size_t beam_in = 0;      // active hypotheses expanded at this step
    std::size_t candidates = 0;   // finite-score expansions considered
    std::vector<TraceExpansion> expansions;  // kept, in selection order
  };

  struct DecodeTrace {
    std::vector<TraceStep> steps;
  };

  struct DecodeResult {
    // Ranked best first. Either all finished, or (when nothing finished within
    // max_len) the best unfinished hypotheses.
    std::vector<Hypothesis> hypotheses;
    bool finished = false;
    DecodeTrace trace;
  };

  // Beam search where each step conditions every source on the same prefix and
  // combines the K distributions with params.combiner.
  DecodeResult beam_search(const SourceSet& sources,
                           std::string_view target_lang,
                           Scorer& scorer,
                           const DecodeParams& params,
                           bool record_trace = false);

  // Rebuilds the ranked hypotheses from a trace alone.
  std::vector<Hypothesis> replay_trace(const DecodeTrace& trace,
                                       TokenId eos_id,
                                       const DecodeParams& params);

  // Forced decoding of a complete sequence under the chosen combiner.
  double score_fixed_sequence(std::span<const TokenId> sequence,
                              const SourceSet& sources,
                              std::string_view target_lang,
                              Scorer& scorer,
                              Combiner combiner,
                              const CombineOptions& options = {});

  // Queries all K sources for each prefix in one batch and combines per prefix.
  // Enforces the shared-prefix contract and validates the scorer's answers.
  std::vector<CombinedStep> score_step(const SourceSet& sources,
                                       std::string_view target_lang,
                                       std::span<const std::span<const TokenId>> prefixes,
                                       Scorer& scorer,
                                       Combiner combiner,
                                       const CombineOptions& options,
                                       std::size_t step);

  void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace);
  DecodeTrace read_trace_jsonl(std::istream& in);

}
