#include "multipivot/decoder.hpp"

#include <algorithm>

namespace multipivot {

  namespace {

    struct Candidate {
      double score;
      TokenId token;
      std::size_t parent;
    };

    // Higher score first; ties go to the lower token id, then the earlier parent.
    bool candidate_before(const Candidate& a, const Candidate& b) {
      if (a.score != b.score)
        return a.score > b.score;
      if (a.token != b.token)
        return a.token < b.token;
      return a.parent < b.parent;
    }

    // Finished hypotheses, ranked, capped at beam_size.
    class FinishedPool {
    public:
      FinishedPool(std::size_t capacity, LengthNormalization norm)
        : _capacity(capacity)
        , _norm(norm) {
      }

      void add(Hypothesis hyp) {
        _hyps.push_back(std::move(hyp));
      }

      // Called once per step after all additions, so insertion order is stable.
      void settle() {
        std::stable_sort(_hyps.begin(), _hyps.end(), [this](const auto& a, const auto& b) {
          return ranking_score(a, _norm) > ranking_score(b, _norm);
        });
        if (_hyps.size() > _capacity)
          _hyps.resize(_capacity);
      }

      bool full() const {
        return _hyps.size() >= _capacity;
      }
      bool empty() const {
        return _hyps.empty();
      }
      double worst_score() const {
        return _hyps.back().score;
      }
      std::vector<Hypothesis> take() {
        return std::move(_hyps);
      }

    private:
      std::size_t _capacity;
      LengthNormalization _norm;
      std::vector<Hypothesis> _hyps;
    };

    Hypothesis extend(const Hypothesis& parent, TokenId token, double step_score, int provenance,
                      TokenId eos_id) {
      Hypothesis hyp = parent;
      hyp.tokens.push_back(token);
      hyp.step_scores.push_back(step_score);
      hyp.score = parent.score + step_score;
      hyp.finished = token == eos_id;
      if (provenance >= 0)
        hyp.provenance.push_back(provenance);
      return hyp;
    }

    // Raw scores only fall as hypotheses grow, so once the pool is full and the
    // best active hypothesis cannot beat its worst entry, search is over. With
    // length normalization no such bound exists and search runs to max_len.
    bool can_stop(const FinishedPool& pool,
                  const std::vector<Hypothesis>& active,
                  const DecodeParams& params) {
      if (active.empty())
        return true;
      if (params.length_normalization != LengthNormalization::none || !pool.full())
        return false;
      return active.front().score <= pool.worst_score();
    }

    std::vector<Hypothesis> finalize(FinishedPool& pool,
                                     std::vector<Hypothesis> active,
                                     const DecodeParams& params,
                                     bool& finished) {
      if (!pool.empty()) {
        finished = true;
        return pool.take();
      }
      finished = false;
      std::stable_sort(active.begin(), active.end(), [&](const auto& a, const auto& b) {
        return ranking_score(a, params.length_normalization)
               > ranking_score(b, params.length_normalization);
      });
      return active;
    }

  }

  std::vector<CombinedStep> score_step(const SourceSet& sources,
                                       std::string_view target_lang,
                                       std::span<const std::span<const TokenId>> prefixes,
                                       Scorer& scorer,
                                       Combiner combiner,
                                       const CombineOptions& options,
                                       std::size_t step) {
    const std::size_t num_sources = sources.size();
    std::vector<StepQuery> queries;
    queries.reserve(prefixes.size() * num_sources);
    for (const auto prefix : prefixes) {
      for (std::size_t k = 0; k < num_sources; ++k)
        queries.push_back(StepQuery{&sources[k], target_lang, prefix});
    }

    for (std::size_t q = 0; q < queries.size(); q += num_sources) {
      const auto shared = queries[q].prefix;
      for (std::size_t k = 1; k < num_sources; ++k) {
        const auto prefix = queries[q + k].prefix;
        if (!std::equal(shared.begin(), shared.end(), prefix.begin(), prefix.end()))
          throw DecodeError(step, "sources of one hypothesis must share the target prefix");
      }
    }

    std::vector<StepDistribution> dists;
    try {
      dists = scorer.score(queries);
    } catch (const std::exception& e) {
      throw DecodeError(step, e.what());
    }
    if (dists.size() != queries.size())
      throw DecodeError(step, "scorer returned " + std::to_string(dists.size())
                                + " distributions for " + std::to_string(queries.size())
                                + " queries");
    for (const auto& d : dists) {
      if (d.size() != scorer.vocab_size())
        throw DecodeError(step, "scorer returned a distribution of size "
                                  + std::to_string(d.size()) + ", vocabulary has "
                                  + std::to_string(scorer.vocab_size()));
    }

    std::vector<CombinedStep> combined;
    combined.reserve(prefixes.size());
    const std::span<const StepDistribution> all(dists);
    for (std::size_t p = 0; p < prefixes.size(); ++p)
      combined.push_back(combine(combiner, all.subspan(p * num_sources, num_sources), options));
    return combined;
  }

  DecodeResult beam_search(const SourceSet& sources,
                           std::string_view target_lang,
                           Scorer& scorer,
                           const DecodeParams& params,
                           bool record_trace) {
    params.validate();
    if (params.combiner == Combiner::direct && sources.size() != 1)
      throw InvalidArgument("direct scoring takes exactly one source, got "
                            + std::to_string(sources.size()));

    const TokenId eos_id = scorer.eos_id();
    const std::size_t vocab_size = scorer.vocab_size();
    const std::size_t beam_size = params.beam_size;
    const CombineOptions options{params.renormalize_maxens};

    DecodeResult result;
    FinishedPool pool(beam_size, params.length_normalization);
    std::vector<Hypothesis> active(1);

    for (std::size_t step = 0; step < params.max_len && !active.empty(); ++step) {
      std::vector<std::span<const TokenId>> prefixes;
      prefixes.reserve(active.size());
      for (const auto& hyp : active)
        prefixes.emplace_back(hyp.tokens);

      const auto combined =
        score_step(sources, target_lang, prefixes, scorer, params.combiner, options, step);

      std::vector<Candidate> candidates;
      candidates.reserve(active.size() * vocab_size);
      for (std::size_t p = 0; p < active.size(); ++p) {
        const auto& scores = combined[p].logscores;
        for (std::size_t y = 0; y < vocab_size; ++y) {
          if (scores[y] == kNegInf)
            continue;
          candidates.push_back(
            Candidate{active[p].score + scores[y], static_cast<TokenId>(y), p});
        }
      }

      // Each parent contributes at most one eos candidate, so the first
      // beam_size non-eos candidates lie within the top 2 * beam_size.
      const std::size_t keep = std::min(candidates.size(), 2 * beam_size);
      std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                        candidate_before);

      TraceStep trace_step{step, active.size(), candidates.size(), {}};
      std::vector<Hypothesis> next;
      next.reserve(beam_size);
      for (std::size_t rank = 0; rank < keep && next.size() < beam_size; ++rank) {
        const Candidate& c = candidates[rank];
        const bool is_eos = c.token == eos_id;
        if (is_eos && rank >= beam_size)
          continue;

        const auto y = static_cast<std::size_t>(c.token);
        const double step_score = combined[c.parent].logscores[y];
        const int provenance =
          combined[c.parent].provenance.empty() ? -1 : combined[c.parent].provenance[y];
        Hypothesis hyp = extend(active[c.parent], c.token, step_score, provenance, eos_id);

        if (record_trace)
          trace_step.expansions.push_back(
            TraceExpansion{c.parent, c.token, step_score, hyp.score, is_eos, provenance});
        if (is_eos)
          pool.add(std::move(hyp));
        else
          next.push_back(std::move(hyp));
      }
      pool.settle();
      if (record_trace)
        result.trace.steps.push_back(std::move(trace_step));

      active = std::move(next);
      if (can_stop(pool, active, params))
        break;
    }

    result.hypotheses = finalize(pool, std::move(active), params, result.finished);
    return result;
  }

  std::vector<Hypothesis> replay_trace(const DecodeTrace& trace,
                                       TokenId eos_id,
                                       const DecodeParams& params) {
    FinishedPool pool(params.beam_size, params.length_normalization);
    std::vector<Hypothesis> active(1);
    for (const auto& step : trace.steps) {
      if (step.beam_in != active.size())
        throw InvalidArgument("trace step " + std::to_string(step.step)
                              + " does not match the replayed beam");
      std::vector<Hypothesis> next;
      for (const auto& e : step.expansions) {
        if (e.parent >= active.size())
          throw InvalidArgument("trace expansion refers to a missing parent");
        Hypothesis hyp = extend(active[e.parent], e.token, e.step_score, e.provenance, eos_id);
        if (hyp.finished)
          pool.add(std::move(hyp));
        else
          next.push_back(std::move(hyp));
      }
      pool.settle();
      active = std::move(next);
    }
    bool finished = false;
    return finalize(pool, std::move(active), params, finished);
  }

  double score_fixed_sequence(std::span<const TokenId> sequence,
                              const SourceSet& sources,
                              std::string_view target_lang,
                              Scorer& scorer,
                              Combiner combiner,
                              const CombineOptions& options) {
    for (const TokenId y : sequence) {
      if (y < 0 || static_cast<std::size_t>(y) >= scorer.vocab_size())
        throw InvalidArgument("token id " + std::to_string(y) + " outside vocabulary");
    }
    if (!is_complete(sequence, scorer.eos_id()))
      throw InvalidArgument("forced decoding needs a complete sequence ending in eos");

    double score = 0;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
      const std::span<const TokenId> prefix = sequence.first(i);
      const auto combined = score_step(sources, target_lang, {&prefix, 1}, scorer, combiner,
                                       options, i);
      score += combined.front().logscores[static_cast<std::size_t>(sequence[i])];
    }
    return score;
  }

}
