#include "multipivot/decoder.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "multipivot/serialize.hpp"

namespace multipivot {

  using nlohmann::json;

  void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace) {
    for (const auto& step : trace.steps) {
      json expansions = json::array();
      for (const auto& e : step.expansions) {
        expansions.push_back(json{{"parent", e.parent},
                                  {"token", e.token},
                                  {"step_score", encode_logvalue(e.step_score)},
                                  {"total_score", encode_logvalue(e.total_score)},
                                  {"finished", e.finished},
                                  {"provenance", e.provenance}});
      }
      const json line{{"step", step.step},
                      {"beam_in", step.beam_in},
                      {"candidates", step.candidates},
                      {"expansions", std::move(expansions)}};
      out << line.dump() << '\n';
    }
  }

  DecodeTrace read_trace_jsonl(std::istream& in) {
    DecodeTrace trace;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty())
        continue;
      const json j = json::parse(line);
      TraceStep step;
      step.step = j.at("step").get<std::size_t>();
      step.beam_in = j.at("beam_in").get<std::size_t>();
      step.candidates = j.at("candidates").get<std::size_t>();
      for (const auto& e : j.at("expansions")) {
        step.expansions.push_back(TraceExpansion{e.at("parent").get<std::size_t>(),
                                                 e.at("token").get<TokenId>(),
                                                 decode_logvalue(e.at("step_score")),
                                                 decode_logvalue(e.at("total_score")),
                                                 e.at("finished").get<bool>(),
                                                 e.at("provenance").get<int>()});
      }
      trace.steps.push_back(std::move(step));
    }
    return trace;
  }

}
