#include "multipivot/synth.hpp"

#include <cstdio>
#include <set>

#include "multipivot/random.hpp"

namespace multipivot::synth {

  namespace {

    // Content tokens render as consecutive CJK ideographs, one character each,
    // so chrF on rendered text works per token.
    constexpr char32_t kFirstGlyph = 0x4E00;
    constexpr std::size_t kMaxContent = 0x9FFF - 0x4E00 + 1;

    std::string utf8(char32_t c) {
      std::string out;
      if (c < 0x80) {
        out += static_cast<char>(c);
      } else if (c < 0x800) {
        out += static_cast<char>(0xC0 | (c >> 6));
        out += static_cast<char>(0x80 | (c & 0x3F));
      } else {
        out += static_cast<char>(0xE0 | (c >> 12));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
      }
      return out;
    }

    Vocab make_vocab(std::size_t vocab_size) {
      if (vocab_size < 2)
        throw InvalidArgument("vocab_size must be at least 2");
      if (vocab_size - 1 > kMaxContent)
        throw InvalidArgument("vocab_size is too large");
      std::vector<std::string> tokens;
      tokens.reserve(vocab_size);
      for (std::size_t i = 0; i + 1 < vocab_size; ++i)
        tokens.push_back(utf8(kFirstGlyph + static_cast<char32_t>(i)));
      tokens.push_back("</s>");
      return Vocab(std::move(tokens), static_cast<TokenId>(vocab_size - 1));
    }

    void check_probability(double value, const char* name, bool allow_one = true) {
      if (!(value > 0 && (allow_one ? value <= 1 : value < 1)))
        throw InvalidArgument(std::string(name) + (allow_one ? " must lie in (0, 1]" : " must lie in (0, 1)"));
    }

    std::uint64_t language_seed(std::uint64_t seed, std::string_view lang) {
      return hash_string(seed, lang);
    }

    std::uint64_t noise_key(std::uint64_t seed, std::string_view src, std::string_view tgt) {
      return hash_string(hash_string(seed, src), tgt);
    }

  }

  void ExperimentConfig::validate() const {
    if (vocab_size < 2)
      throw InvalidArgument("vocab_size must be at least 2");
    if (vocab_size - 1 > kMaxContent)
      throw InvalidArgument("vocab_size is too large");
    if (corpus_size < 1)
      throw InvalidArgument("corpus_size must be at least 1");
    if (min_len < 1 || min_len > max_len)
      throw InvalidArgument("sentence lengths must satisfy 1 <= min_len <= max_len");
    if (source_lang.empty() || target_lang.empty() || source_lang == target_lang)
      throw InvalidArgument("source and target languages must be distinct and non-empty");
    if (pivots.empty())
      throw InvalidArgument("at least one pivot is required");

    std::set<std::string, std::less<>> seen;
    double total_weight = 0;
    for (const auto& p : pivots) {
      if (p.lang.empty() || p.lang == source_lang || p.lang == target_lang)
        throw InvalidArgument("pivot '" + p.lang + "' collides with the source or target");
      if (!seen.insert(p.lang).second)
        throw InvalidArgument("duplicate pivot '" + p.lang + "'");
      if (!(p.honest_weight >= 0))
        throw InvalidArgument("honest_weight must be non-negative");
      total_weight += p.honest_weight;
      if (p.honest_fidelity)
        check_probability(*p.honest_fidelity, "honest_fidelity");
      if (p.weak_fidelity)
        check_probability(*p.weak_fidelity, "weak_fidelity");
      if (p.attractor_conf)
        check_probability(*p.attractor_conf, "attractor_conf", false);
    }
    if (!(total_weight > 0))
      throw InvalidArgument("pivot honest weights must have a positive sum");
    if (!single_pivot.empty() && !seen.contains(single_pivot))
      throw InvalidArgument("single_pivot '" + single_pivot + "' is not a configured pivot");

    if (attractor_len < 1)
      throw InvalidArgument("attractor_len must be at least 1");
    if (!(trigger_prob >= 0 && trigger_prob <= 1))
      throw InvalidArgument("trigger_prob must lie in [0, 1]");
    check_probability(attractor_conf, "attractor_conf", false);
    if (lock_conf)
      check_probability(*lock_conf, "lock_conf", false);
    check_probability(honest_fidelity, "honest_fidelity");
    check_probability(weak_fidelity, "weak_fidelity");
    check_probability(direct_fidelity, "direct_fidelity");
    check_probability(pivot_stage_fidelity, "pivot_stage_fidelity");
    for (const double share : {sticky_share, noise_peak, pivot_stage_noise}) {
      if (!(share >= 0 && share <= 1))
        throw InvalidArgument("confusion shares must lie in [0, 1]");
    }
    pivot_decode.validate();
    final_decode.validate();
    if (workers < 1)
      throw InvalidArgument("workers must be at least 1");
  }

  std::uint64_t sentence_seed(std::uint64_t seed, std::size_t index) {
    return hash_combine(seed, static_cast<std::uint64_t>(index));
  }

  Task::Task(ExperimentConfig config)
    : _config(std::move(config))
    , _vocab(make_vocab(_config.vocab_size)) {
    _config.validate();
    const std::size_t content = _config.vocab_size - 1;
    const auto eos = static_cast<TokenId>(content);

    std::vector<std::string> codes{_config.source_lang, _config.target_lang};
    for (const auto& p : _config.pivots)
      codes.push_back(p.lang);
    for (const auto& code : codes)
      _languages.emplace(code, CipherLanguage(code, content, language_seed(_config.seed, code)));

    RandomStream attractor_rng(hash_string(_config.seed, "attractor"));
    for (std::size_t i = 0; i < _config.attractor_len; ++i)
      _attractor.sequence.push_back(static_cast<TokenId>(attractor_rng.below(content)));
    _attractor.sequence.push_back(eos);
    _attractor.trigger_prob = _config.trigger_prob;
    _attractor.attractor_conf = _config.attractor_conf;
    _attractor.lock_conf = _config.lock_conf;

    double total_weight = 0;
    for (const auto& p : _config.pivots)
      total_weight += p.honest_weight;

    const auto& src = language(_config.source_lang);
    const auto& tgt = language(_config.target_lang);
    const int width = static_cast<int>(std::to_string(_config.corpus_size - 1).size());

    _sentences.reserve(_config.corpus_size);
    for (std::size_t index = 0; index < _config.corpus_size; ++index) {
      RandomStream rng(sentence_seed(_config.seed, index));
      SentencePlan plan;
      char id[32];
      std::snprintf(id, sizeof(id), "s%0*zu", width, index);
      plan.id = id;
      plan.index = index;

      const std::size_t length =
        _config.min_len + static_cast<std::size_t>(rng.below(_config.max_len - _config.min_len + 1));
      for (std::size_t i = 0; i < length; ++i)
        plan.meaning.push_back(static_cast<TokenId>(rng.below(content)));
      plan.triggered = rng.uniform() < _config.trigger_prob;

      const double pick = rng.uniform() * total_weight;
      double cumulative = 0;
      plan.honest_pivot = _config.pivots.size() - 1;
      for (std::size_t k = 0; k < _config.pivots.size(); ++k) {
        cumulative += _config.pivots[k].honest_weight;
        if (pick < cumulative && _config.pivots[k].honest_weight > 0) {
          plan.honest_pivot = k;
          break;
        }
      }

      for (const TokenId t : plan.meaning) {
        plan.source.push_back(src.encode(t));
        plan.reference.push_back(tgt.encode(t));
      }
      plan.source.push_back(eos);
      plan.reference.push_back(eos);
      _sentences.push_back(std::move(plan));
    }
  }

  const CipherLanguage& Task::language(std::string_view code) const {
    auto it = _languages.find(code);
    if (it == _languages.end())
      throw InvalidArgument("unknown language '" + std::string(code) + "'");
    return it->second;
  }

  const SentencePlan* Task::find(std::string_view id) const {
    for (const auto& s : _sentences) {
      if (s.id == id)
        return &s;
    }
    return nullptr;
  }

  std::shared_ptr<ChannelScorer> Task::scorer_for(const SentencePlan& sentence) const {
    const auto& c = _config;
    auto scorer = std::make_shared<ChannelScorer>(c.vocab_size, _vocab.eos_id());
    const auto& src = language(c.source_lang);
    const auto& tgt = language(c.target_lang);

    for (std::size_t k = 0; k < c.pivots.size(); ++k) {
      const auto& spec = c.pivots[k];
      const auto& pivot = language(spec.lang);
      const bool honest = k == sentence.honest_pivot;

      Confusion stage1{0, c.pivot_stage_noise, noise_key(c.seed, c.source_lang, spec.lang)};
      scorer->add(make_channel(src, pivot, c.pivot_stage_fidelity, stage1), ChannelMode::honest);

      AttractorConfig attractor = _attractor;
      if (spec.attractor_conf)
        attractor.attractor_conf = *spec.attractor_conf;
      Confusion stage2{0, c.noise_peak, noise_key(c.seed, spec.lang, c.target_lang)};
      double fidelity = honest ? spec.honest_fidelity.value_or(c.honest_fidelity)
                               : spec.weak_fidelity.value_or(c.weak_fidelity);
      ChannelMode mode = ChannelMode::honest;
      if (sentence.triggered) {
        if (honest)
          stage2.attractor_share = c.sticky_share;
        else
          mode = ChannelMode::triggered;
      }
      // Noise takes what is left of the error mass after the sticky share.
      if (stage2.attractor_share + stage2.noise_peak > 1)
        stage2.noise_peak = 1 - stage2.attractor_share;
      scorer->add(make_channel(pivot, tgt, fidelity, stage2, std::move(attractor)), mode);
    }

    Confusion direct{0, c.noise_peak, noise_key(c.seed, c.source_lang, c.target_lang)};
    scorer->add(make_channel(src, tgt, c.direct_fidelity, direct, _attractor),
                sentence.triggered ? ChannelMode::triggered : ChannelMode::honest);
    return scorer;
  }

  std::string Task::corpus_jsonl() const {
    std::string out;
    for (const auto& s : _sentences) {
      const nlohmann::json source{{"id", s.id},
                                  {"lang", _config.source_lang},
                                  {"tokens", s.source},
                                  {"text", _vocab.decode(s.source)}};
      const nlohmann::json reference{{"id", s.id},
                                     {"lang", _config.target_lang},
                                     {"tokens", s.reference},
                                     {"text", _vocab.decode(s.reference)}};
      out += source.dump();
      out += '\n';
      out += reference.dump();
      out += '\n';
    }
    return out;
  }

  bool Task::is_ground_truth_hallucination(const SentencePlan& sentence,
                                           std::span<const TokenId> output) const {
    if (!sentence.triggered)
      return false;
    const TokenId eos = _vocab.eos_id();
    std::size_t content = 0;
    std::size_t matches = 0;
    const auto& attractor = _attractor.sequence;
    for (std::size_t i = 0; i < output.size(); ++i) {
      if (output[i] == eos)
        continue;
      ++content;
      if (i < attractor.size() && attractor[i] == output[i])
        ++matches;
    }
    return content > 0 && 2 * matches >= content;
  }

  Task build_task(const ExperimentConfig& config) {
    return Task(config);
  }

}
