#include "multipivot/serialize.hpp"

#include <cmath>

namespace multipivot {

  using nlohmann::json;

  json encode_logvalue(double value) {
    if (value == kNegInf)
      return nullptr;
    if (!std::isfinite(value))
      throw InvalidArgument("cannot encode non-finite log value");
    return value;
  }

  double decode_logvalue(const json& value) {
    if (value.is_null())
      return kNegInf;
    if (value.is_string()) {
      const auto& s = value.get_ref<const std::string&>();
      if (s == "-inf" || s == "-Infinity")
        return kNegInf;
      throw InvalidArgument("invalid log value '" + s + "'");
    }
    if (!value.is_number())
      throw InvalidArgument("log value must be a number or null");
    return value.get<double>();
  }

  json encode_logvector(std::span<const double> values) {
    json out = json::array();
    for (const double v : values)
      out.push_back(encode_logvalue(v));
    return out;
  }

  std::vector<double> decode_logvector(const json& values) {
    if (!values.is_array())
      throw InvalidArgument("expected an array of log values");
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& v : values)
      out.push_back(decode_logvalue(v));
    return out;
  }

  void to_json(json& j, const Vocab& vocab) {
    j = json{{"tokens", vocab.tokens()}, {"eos_id", vocab.eos_id()}};
    j["bos_id"] = vocab.bos_id() ? json(*vocab.bos_id()) : json(nullptr);
  }

  Vocab vocab_from_json(const json& j) {
    std::optional<TokenId> bos;
    if (j.contains("bos_id") && !j.at("bos_id").is_null())
      bos = j.at("bos_id").get<TokenId>();
    return Vocab(j.at("tokens").get<std::vector<std::string>>(), j.at("eos_id").get<TokenId>(), bos);
  }

  void to_json(json& j, const StepDistribution& dist) {
    j = json{{"logprobs", encode_logvector(dist.logprobs())}};
  }

  StepDistribution step_distribution_from_json(const json& j) {
    return StepDistribution::from_logprobs(decode_logvector(j.at("logprobs")));
  }

  void to_json(json& j, const CombinedStep& step) {
    j = json{{"logscores", encode_logvector(step.logscores)},
             {"normalized", step.normalized},
             {"provenance", step.provenance}};
  }

  void from_json(const json& j, CombinedStep& step) {
    step.logscores = decode_logvector(j.at("logscores"));
    step.normalized = j.at("normalized").get<bool>();
    step.provenance = j.value("provenance", std::vector<int>{});
  }

  void to_json(json& j, const SourceEntry& entry) {
    j = json{{"lang", entry.lang}, {"tokens", entry.tokens}};
    if (entry.text)
      j["text"] = *entry.text;
  }

  void from_json(const json& j, SourceEntry& entry) {
    entry.lang = j.at("lang").get<std::string>();
    entry.tokens = j.value("tokens", TokenSeq{});
    entry.text.reset();
    if (j.contains("text") && !j.at("text").is_null())
      entry.text = j.at("text").get<std::string>();
  }

  void to_json(json& j, const SourceSet& sources) {
    j = json{{"entries", sources.entries()}};
  }

  SourceSet source_set_from_json(const json& j) {
    return SourceSet(j.at("entries").get<std::vector<SourceEntry>>());
  }

  void to_json(json& j, const Hypothesis& hyp) {
    j = json{{"tokens", hyp.tokens},
             {"score", encode_logvalue(hyp.score)},
             {"finished", hyp.finished},
             {"step_scores", encode_logvector(hyp.step_scores)},
             {"provenance", hyp.provenance}};
  }

  void from_json(const json& j, Hypothesis& hyp) {
    hyp.tokens = j.at("tokens").get<TokenSeq>();
    hyp.score = decode_logvalue(j.at("score"));
    hyp.finished = j.at("finished").get<bool>();
    hyp.step_scores = decode_logvector(j.value("step_scores", json::array()));
    hyp.provenance = j.value("provenance", std::vector<int>{});
  }

  void to_json(json& j, const DecodeParams& params) {
    j = json{{"beam_size", params.beam_size},
             {"max_len", params.max_len},
             {"combiner", to_string(params.combiner)},
             {"length_normalization", to_string(params.length_normalization)},
             {"renormalize_maxens", params.renormalize_maxens}};
  }

  void from_json(const json& j, DecodeParams& params) {
    DecodeParams defaults;
    params.beam_size = j.value("beam_size", defaults.beam_size);
    params.max_len = j.value("max_len", defaults.max_len);
    params.combiner = combiner_from_string(j.value("combiner", std::string("direct")));
    params.length_normalization =
      length_normalization_from_string(j.value("length_normalization", std::string("none")));
    params.renormalize_maxens = j.value("renormalize_maxens", false);
    params.validate();
  }

}
