#include "multipivot/pipeline.hpp"

#include <fstream>
#include <map>
#include <set>

#include "multipivot/serialize.hpp"

namespace multipivot {

  using nlohmann::json;

  namespace {

    struct SentenceLine {
      std::string id;
      std::string lang;
      TokenSeq tokens;
      std::optional<std::string> text;
    };

    SentenceLine parse_sentence_line(const std::string& line, std::size_t line_number) {
      const auto where = [&] { return "line " + std::to_string(line_number) + ": "; };
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw InvalidArgument(where() + e.what());
      }
      if (!j.is_object())
        throw InvalidArgument(where() + "expected a JSON object");
      SentenceLine out;
      try {
        out.id = j.at("id").get<std::string>();
        out.lang = j.at("lang").get<std::string>();
        if (j.contains("tokens") && !j.at("tokens").is_null())
          out.tokens = j.at("tokens").get<TokenSeq>();
        if (j.contains("text") && !j.at("text").is_null())
          out.text = j.at("text").get<std::string>();
      } catch (const json::exception& e) {
        throw InvalidArgument(where() + e.what());
      }
      if (out.tokens.empty() && !out.text)
        throw InvalidArgument(where() + "sentence '" + out.id + "' has neither tokens nor text");
      return out;
    }

  }

  Corpus read_corpus(std::istream& in, std::string_view source_lang, std::string_view target_lang) {
    std::vector<SentenceLine> sources;
    std::map<std::string, SentenceLine, std::less<>> references;
    std::set<std::string, std::less<>> source_ids;

    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      SentenceLine s = parse_sentence_line(line, line_number);
      if (s.lang == source_lang) {
        if (!source_ids.insert(s.id).second)
          throw InvalidArgument("duplicate source sentence id '" + s.id + "'");
        sources.push_back(std::move(s));
      } else if (s.lang == target_lang) {
        const std::string id = s.id;
        if (!references.emplace(id, std::move(s)).second)
          throw InvalidArgument("duplicate reference id '" + id + "'");
      }
    }

    Corpus corpus;
    corpus.sentences.reserve(sources.size());
    for (auto& s : sources) {
      CorpusSentence sentence;
      sentence.id = s.id;
      sentence.source = SourceEntry{s.lang, std::move(s.tokens), std::move(s.text)};
      auto it = references.find(sentence.id);
      if (it != references.end())
        sentence.reference = Reference{std::move(it->second.tokens), std::move(it->second.text)};
      corpus.sentences.push_back(std::move(sentence));
    }
    return corpus;
  }

  Corpus load_corpus(const std::string& path,
                     std::string_view source_lang,
                     std::string_view target_lang) {
    std::ifstream in(path);
    if (!in)
      throw std::runtime_error("cannot open corpus '" + path + "'");
    return read_corpus(in, source_lang, target_lang);
  }

  json output_record(const SentenceResult& result, std::string_view target_lang, const Vocab* vocab) {
    json j{{"id", result.id}, {"system", result.system}, {"lang", target_lang}};
    if (!result.translation) {
      j["error"] = result.error;
      j["failed_stage"] = result.failed_stage;
      return j;
    }
    const auto& t = *result.translation;
    j["tokens"] = t.hypothesis.tokens;
    if (vocab)
      j["text"] = vocab->decode(t.hypothesis.tokens);
    j["score"] = encode_logvalue(t.hypothesis.score);
    j["finished"] = t.finished;
    j["step_scores"] = encode_logvector(t.hypothesis.step_scores);
    j["provenance"] = t.hypothesis.provenance;
    json pivots = json::array();
    for (const auto& p : t.pivots)
      pivots.push_back(p);
    j["pivots"] = std::move(pivots);
    return j;
  }

  void write_outputs_jsonl(std::ostream& out,
                           const CorpusRun& run,
                           std::string_view target_lang,
                           const Vocab* vocab) {
    for (const auto& system : run.systems) {
      for (const auto& sentence : system.sentences)
        out << output_record(sentence, target_lang, vocab).dump() << '\n';
    }
  }

  std::vector<SystemResults> read_outputs_jsonl(std::istream& in) {
    std::vector<SystemResults> systems;
    std::map<std::string, std::size_t, std::less<>> index;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      SentenceResult result;
      try {
        const json j = json::parse(line);
        result.id = j.at("id").get<std::string>();
        result.system = j.value("system", std::string("system"));
        if (j.contains("error")) {
          result.error = j.at("error").get<std::string>();
          result.failed_stage = j.value("failed_stage", std::string());
        } else {
          Translation t;
          t.hypothesis.tokens = j.at("tokens").get<TokenSeq>();
          t.hypothesis.score = decode_logvalue(j.value("score", json(0.0)));
          t.finished = j.value("finished", true);
          t.hypothesis.finished = t.finished;
          t.hypothesis.step_scores = decode_logvector(j.value("step_scores", json::array()));
          t.hypothesis.provenance = j.value("provenance", std::vector<int>{});
          if (j.contains("pivots"))
            t.pivots = j.at("pivots").get<std::vector<SourceEntry>>();
          result.translation = std::move(t);
        }
      } catch (const json::exception& e) {
        throw InvalidArgument("line " + std::to_string(line_number) + ": " + e.what());
      }
      auto [it, inserted] = index.try_emplace(result.system, systems.size());
      if (inserted)
        systems.push_back(SystemResults{result.system, {}});
      systems[it->second].sentences.push_back(std::move(result));
    }
    return systems;
  }

}
