#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "multipivot/core.hpp"
#include "multipivot/decoder.hpp"
#include "multipivot/metrics.hpp"

// Synthetic translation tasks between cipher languages.
//
// Every language is a permutation of one shared set of content tokens, so a
// sentence has an exact image in every language. Channels (src -> tgt) emit
// next-token distributions that put `fidelity` on the correct image token and
// spread the rest by a confusion rule. A sentence may be "triggered": then the
// affected channels push a shared attractor sequence instead, which is how the
// harness models hallucinations that stay probable across translation paths.
namespace multipivot::synth {

  // Token layout: ids [0, V - 1) are content tokens, V - 1 is eos.
  class CipherLanguage {
  public:
    CipherLanguage(std::string code, std::size_t content_size, std::uint64_t seed);

    const std::string& code() const {
      return _code;
    }
    TokenId encode(TokenId base) const;
    TokenId decode(TokenId token) const;
    std::size_t content_size() const {
      return _forward.size();
    }

  private:
    std::string _code;
    std::vector<TokenId> _forward;
    std::vector<TokenId> _inverse;
  };

  struct AttractorConfig {
    TokenSeq sequence;  // complete, in the target language
    double trigger_prob = 0.3;
    double attractor_conf = 0.45;
    // Mass on the attractor once the prefix already follows it. Defaults to
    // attractor_conf (no lock-in).
    std::optional<double> lock_conf;

    void validate(TokenId eos_id) const;
  };

  // How the error mass (1 - main mass) is spread:
  //   attractor_share  to the current attractor token (honest mode only)
  //   noise            up to noise_peak to one pseudo-random distractor token;
  //                    the actual share varies with (source, position)
  //   rest             uniformly over all tokens except the main one
  struct Confusion {
    double attractor_share = 0;
    double noise_peak = 0;
    std::uint64_t noise_key = 0;
  };

  struct ChannelModel {
    std::string src_lang;
    std::string tgt_lang;
    // Source-language token -> target-language token, eos -> eos.
    std::vector<TokenId> mapping;
    TokenId eos_id = 0;
    double fidelity = 1.0;
    Confusion confusion;
    AttractorConfig attractor;

    std::size_t vocab_size() const {
      return mapping.size();
    }
    void validate() const;
  };

  ChannelModel make_channel(const CipherLanguage& src,
                            const CipherLanguage& tgt,
                            double fidelity,
                            Confusion confusion = {},
                            AttractorConfig attractor = {});

  enum class ChannelMode {
    honest,
    triggered,
  };

  // Emission at position prefix.size(). Depends only on (source, prefix):
  // honest mode targets the image of source[i] (eos at and past the end of the
  // source); triggered mode targets the attractor's i-th token.
  StepDistribution channel_step(const ChannelModel& channel,
                                std::span<const TokenId> source,
                                std::span<const TokenId> prefix,
                                ChannelMode mode);

  // Scorer backed by channel models, looked up by (source lang, target lang).
  class ChannelScorer : public Scorer {
  public:
    ChannelScorer(std::size_t vocab_size, TokenId eos_id);

    void add(ChannelModel channel, ChannelMode mode);

    std::size_t vocab_size() const override {
      return _vocab_size;
    }
    TokenId eos_id() const override {
      return _eos_id;
    }
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override;

    const ChannelModel& channel(std::string_view src, std::string_view tgt) const;
    ChannelMode mode(std::string_view src, std::string_view tgt) const;

  private:
    std::size_t _vocab_size;
    TokenId _eos_id;
    std::map<std::pair<std::string, std::string>, std::pair<ChannelModel, ChannelMode>, std::less<>>
      _channels;
  };

  struct PivotSpec {
    std::string lang;
    // Relative chance of being the sentence's high-fidelity pivot.
    double honest_weight = 1.0;
    std::optional<double> honest_fidelity;
    std::optional<double> weak_fidelity;
    std::optional<double> attractor_conf;
  };

  struct ExperimentConfig {
    std::size_t vocab_size = 32;  // including eos
    std::size_t min_len = 6;
    std::size_t max_len = 14;
    std::size_t corpus_size = 500;
    std::uint64_t seed = 20240601;

    std::string source_lang = "src";
    std::string target_lang = "tgt";
    std::vector<PivotSpec> pivots = {{"en", 0.5, {}, {}, {}}, {"es", 0.25, {}, {}, {}}, {"fr", 0.25, {}, {}, {}}};
    // Pivot used for the single-pivot baseline column.
    std::string single_pivot = "en";

    std::size_t attractor_len = 8;
    double trigger_prob = 0.3;
    double attractor_conf = 0.45;
    std::optional<double> lock_conf;

    double honest_fidelity = 0.9;
    double weak_fidelity = 0.35;
    double direct_fidelity = 0.4;
    double pivot_stage_fidelity = 0.85;
    double sticky_share = 0.8;
    double noise_peak = 0.9;
    double pivot_stage_noise = 0.5;

    DecodeParams pivot_decode{5, 64, Combiner::direct};
    DecodeParams final_decode{5, 64, Combiner::direct};

    metrics::EvalOptions eval;
    std::size_t workers = 1;

    void validate() const;
  };

  ExperimentConfig experiment_config_from_toml(std::string_view toml_text);
  ExperimentConfig load_experiment_config(const std::string& path);

  struct SentencePlan {
    std::string id;
    std::size_t index = 0;
    TokenSeq meaning;  // content tokens before enciphering, no eos
    TokenSeq source;
    TokenSeq reference;
    bool triggered = false;
    std::size_t honest_pivot = 0;
  };

  class Task {
  public:
    explicit Task(ExperimentConfig config);

    const ExperimentConfig& config() const {
      return _config;
    }
    const Vocab& vocab() const {
      return _vocab;
    }
    const CipherLanguage& language(std::string_view code) const;
    const AttractorConfig& attractor() const {
      return _attractor;
    }
    const std::vector<SentencePlan>& sentences() const {
      return _sentences;
    }
    const SentencePlan* find(std::string_view id) const;

    // All channels a sentence needs: source -> pivots, pivots -> target, and
    // source -> target, set to the sentence's regime.
    std::shared_ptr<ChannelScorer> scorer_for(const SentencePlan& sentence) const;

    // Source and reference lines in the JSONL sentence format.
    std::string corpus_jsonl() const;

    // Triggered sentence whose output follows the attractor on at least half
    // of its content positions.
    bool is_ground_truth_hallucination(const SentencePlan& sentence,
                                       std::span<const TokenId> output) const;

  private:
    ExperimentConfig _config;
    Vocab _vocab;
    std::map<std::string, CipherLanguage, std::less<>> _languages;
    AttractorConfig _attractor;
    std::vector<SentencePlan> _sentences;
  };

  Task build_task(const ExperimentConfig& config);

  // Stream seed of sentence `index`; the first draw is the sentence length.
  std::uint64_t sentence_seed(std::uint64_t seed, std::size_t index);

  struct ConfidentPivotAgreement {
    std::size_t triggered = 0;
    std::size_t maxens_matches = 0;
    std::size_t multiavg_matches = 0;
  };

  struct SentenceOutcome {
    std::string id;
    bool triggered = false;
    std::string honest_pivot;
    TokenSeq source;
    TokenSeq reference;
    std::vector<SourceEntry> pivots;
    // system id -> output (empty optional on failure)
    std::vector<std::pair<std::string, std::optional<Hypothesis>>> outputs;
    // systems whose output is a ground-truth hallucination
    std::vector<std::string> hallucinated;
    // triggered sentences only: single-pivot output through the honest pivot
    std::optional<Hypothesis> confident_pivot_output;
  };

  struct ExperimentReport {
    metrics::EvalReport eval;
    ConfidentPivotAgreement agreement;
    std::vector<SentenceOutcome> sentences;

    nlohmann::json to_json() const;
  };

  // Runs direct, multiavg, maxens, and the single-pivot baseline over the task.
  ExperimentReport run_experiment(const ExperimentConfig& config);

  void write_sentence_dump(std::ostream& out, const ExperimentReport& report, const Vocab& vocab);

}
