#pragma once

#include <json.hpp>

#include "multipivot/core.hpp"

// JSON encodings of the core types. Log-probabilities are natural logs;
// negative infinity is written as null because JSON has no literal for it.
namespace multipivot {

  nlohmann::json encode_logvalue(double value);
  double decode_logvalue(const nlohmann::json& value);

  nlohmann::json encode_logvector(std::span<const double> values);
  std::vector<double> decode_logvector(const nlohmann::json& values);

  void to_json(nlohmann::json& j, const Vocab& vocab);
  Vocab vocab_from_json(const nlohmann::json& j);

  void to_json(nlohmann::json& j, const StepDistribution& dist);
  StepDistribution step_distribution_from_json(const nlohmann::json& j);

  void to_json(nlohmann::json& j, const CombinedStep& step);
  void from_json(const nlohmann::json& j, CombinedStep& step);

  void to_json(nlohmann::json& j, const SourceEntry& entry);
  void from_json(const nlohmann::json& j, SourceEntry& entry);

  void to_json(nlohmann::json& j, const SourceSet& sources);
  SourceSet source_set_from_json(const nlohmann::json& j);

  void to_json(nlohmann::json& j, const Hypothesis& hyp);
  void from_json(const nlohmann::json& j, Hypothesis& hyp);

  void to_json(nlohmann::json& j, const DecodeParams& params);
  void from_json(const nlohmann::json& j, DecodeParams& params);

}
