#include "multipivot/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace multipivot::metrics {

  using nlohmann::json;

  const SystemScores& EvalReport::at(std::string_view system) const {
    for (const auto& s : systems) {
      if (s.system == system)
        return s;
    }
    throw InvalidArgument("no system '" + std::string(system) + "' in report");
  }

  bool EvalReport::is_best(std::string_view system) const {
    return std::find(best.begin(), best.end(), system) != best.end();
  }

  EvalReport evaluate(std::string_view src_lang,
                      std::string_view tgt_lang,
                      std::span<const EvalSentence> sentences,
                      std::span<const SystemRun> runs,
                      const EvalOptions& options) {
    if (sentences.empty())
      throw InvalidArgument("cannot evaluate an empty corpus");
    if (runs.empty())
      throw InvalidArgument("no systems to evaluate");

    EvalReport report;
    report.src_lang = src_lang;
    report.tgt_lang = tgt_lang;
    report.alpha = options.bootstrap.alpha;
    report.chrf_threshold = options.chrf_threshold;

    // Per-sentence BLEU statistics, kept for the significance tests.
    std::vector<std::vector<std::optional<BleuStats>>> sentence_stats;

    for (const auto& run : runs) {
      if (run.outputs.size() != sentences.size())
        throw InvalidArgument("system '" + run.system + "' has "
                              + std::to_string(run.outputs.size()) + " outputs for "
                              + std::to_string(sentences.size()) + " sentences");
      SystemScores scores;
      scores.system = run.system;
      BleuStats total;
      std::size_t chrf_flags = 0;
      std::size_t tng_flags = 0;
      auto& stats = sentence_stats.emplace_back(sentences.size());
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& output = run.outputs[i];
        if (!output) {
          ++scores.failed;
          continue;
        }
        ++scores.scored;
        const auto& sentence = sentences[i];
        stats[i] = bleu_stats(output->tokens, sentence.reference);
        total += *stats[i];
        if (chrf(output->text, sentence.reference_text, options.chrf) < options.chrf_threshold)
          ++chrf_flags;
        if (tng_flag(sentence.source, output->tokens, options.tng))
          ++tng_flags;
      }
      if (scores.scored > 0) {
        const double n = static_cast<double>(scores.scored);
        scores.bleu = bleu_from_stats(total);
        scores.chrf_hallucination_rate = 100.0 * static_cast<double>(chrf_flags) / n;
        scores.tng_hallucination_rate = 100.0 * static_cast<double>(tng_flags) / n;
      }
      report.systems.push_back(std::move(scores));
    }

    // A system is marked best unless some other system beats it significantly.
    // Each pair is compared on the sentences both systems translated.
    const std::size_t num_systems = runs.size();
    std::vector<bool> outperformed(num_systems, false);
    for (std::size_t a = 0; a < num_systems; ++a) {
      for (std::size_t b = a + 1; b < num_systems; ++b) {
        std::vector<BleuStats> stats_a, stats_b;
        for (std::size_t i = 0; i < sentences.size(); ++i) {
          if (sentence_stats[a][i] && sentence_stats[b][i]) {
            stats_a.push_back(*sentence_stats[a][i]);
            stats_b.push_back(*sentence_stats[b][i]);
          }
        }
        if (stats_a.empty())
          continue;
        const auto verdict = paired_bootstrap_bleu(stats_a, stats_b, options.bootstrap);
        if (!verdict.significant)
          continue;
        if (verdict.winner == Winner::a)
          outperformed[b] = true;
        else if (verdict.winner == Winner::b)
          outperformed[a] = true;
      }
    }
    for (std::size_t s = 0; s < num_systems; ++s) {
      if (!outperformed[s] && report.systems[s].scored > 0)
        report.best.push_back(report.systems[s].system);
    }
    return report;
  }

  json to_json(const EvalReport& report) {
    json systems = json::array();
    for (const auto& s : report.systems) {
      json entry{{"system", s.system},
                 {"bleu", s.bleu},
                 {"chrf_hallucination_rate", s.chrf_hallucination_rate},
                 {"tng_hallucination_rate", s.tng_hallucination_rate},
                 {"scored", s.scored},
                 {"failed", s.failed}};
      if (s.ground_truth_hallucination_rate)
        entry["ground_truth_hallucination_rate"] = *s.ground_truth_hallucination_rate;
      systems.push_back(std::move(entry));
    }
    return json{{"direction", {report.src_lang, report.tgt_lang}},
                {"systems", std::move(systems)},
                {"best", report.best},
                {"alpha", report.alpha},
                {"chrf_threshold", report.chrf_threshold}};
  }

  EvalReport report_from_json(const json& j) {
    EvalReport report;
    const auto& direction = j.at("direction");
    report.src_lang = direction.at(0).get<std::string>();
    report.tgt_lang = direction.at(1).get<std::string>();
    for (const auto& entry : j.at("systems")) {
      SystemScores s;
      s.system = entry.at("system").get<std::string>();
      s.bleu = entry.at("bleu").get<double>();
      s.chrf_hallucination_rate = entry.at("chrf_hallucination_rate").get<double>();
      s.tng_hallucination_rate = entry.at("tng_hallucination_rate").get<double>();
      s.scored = entry.at("scored").get<std::size_t>();
      s.failed = entry.at("failed").get<std::size_t>();
      if (entry.contains("ground_truth_hallucination_rate"))
        s.ground_truth_hallucination_rate = entry.at("ground_truth_hallucination_rate").get<double>();
      report.systems.push_back(std::move(s));
    }
    report.best = j.at("best").get<std::vector<std::string>>();
    report.alpha = j.value("alpha", 0.05);
    report.chrf_threshold = j.value("chrf_threshold", 20.0);
    return report;
  }

  std::string display_name(std::string_view system) {
    if (system == "direct")
      return "Direct";
    if (system == "multiavg")
      return "MultiAvg";
    if (system == "maxens")
      return "MaxEns";
    if (system == "logavg")
      return "LogAvg";
    constexpr std::string_view pivot_prefix = "pivot:";
    if (system.starts_with(pivot_prefix)) {
      std::string lang(system.substr(pivot_prefix.size()));
      for (auto& c : lang)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return lang + " Pivot";
    }
    return std::string(system);
  }

  namespace {

    constexpr int kLabelWidth = 18;
    constexpr int kColumnWidth = 10;

    std::string pad_left(const std::string& s, int width) {
      const auto w = static_cast<std::size_t>(width);
      return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
    }

    std::string pad_right(const std::string& s, int width) {
      const auto w = static_cast<std::size_t>(width);
      return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
    }

    std::string format_value(double value, bool marked) {
      char buffer[32];
      std::snprintf(buffer, sizeof(buffer), "%.1f%s", value, marked ? "*" : " ");
      return buffer;
    }

    template <typename Get>
    std::string render_table(std::string_view title,
                             std::span<const EvalReport> reports,
                             const std::vector<std::string>& systems,
                             Get get,
                             bool mark_best) {
      std::string out(title);
      out += '\n';
      out += pad_right("Language Pair", kLabelWidth);
      for (const auto& system : systems)
        out += pad_left(display_name(system) + " ", kColumnWidth);
      out += '\n';

      std::vector<double> sums(systems.size(), 0);
      for (const auto& report : reports) {
        out += pad_right(report.src_lang + "-" + report.tgt_lang, kLabelWidth);
        for (std::size_t s = 0; s < systems.size(); ++s) {
          const double value = get(report.at(systems[s]));
          sums[s] += value;
          out += pad_left(format_value(value, mark_best && report.is_best(systems[s])),
                          kColumnWidth);
        }
        out += '\n';
      }
      if (reports.size() > 1) {
        out += pad_right("Average", kLabelWidth);
        for (const double sum : sums)
          out += pad_left(format_value(sum / static_cast<double>(reports.size()), false),
                          kColumnWidth);
        out += '\n';
      }
      return out;
    }

  }

  std::string render_tables(std::span<const EvalReport> reports) {
    if (reports.empty())
      return {};
    std::vector<std::string> systems;
    for (const auto& s : reports.front().systems)
      systems.push_back(s.system);

    char chrf_title[96];
    std::snprintf(chrf_title, sizeof(chrf_title), "Hallucinations, chrF < %g (%%)",
                  reports.front().chrf_threshold);
    char legend[96];
    std::snprintf(legend, sizeof(legend),
                  "* not significantly outperformed (paired bootstrap, p < %g)",
                  reports.front().alpha);

    std::string out;
    out += render_table("BLEU (caller tokenization)", reports, systems,
                        [](const SystemScores& s) { return s.bleu; }, true);
    out += legend;
    out += "\n\n";
    out += render_table(chrf_title, reports, systems,
                        [](const SystemScores& s) { return s.chrf_hallucination_rate; }, false);
    out += '\n';
    out += render_table("Oscillatory hallucinations, TNG (%)", reports, systems,
                        [](const SystemScores& s) { return s.tng_hallucination_rate; }, false);

    const bool has_ground_truth = std::all_of(
      reports.begin(), reports.end(), [](const EvalReport& r) {
        return std::all_of(r.systems.begin(), r.systems.end(), [](const SystemScores& s) {
          return s.ground_truth_hallucination_rate.has_value();
        });
      });
    if (has_ground_truth) {
      out += '\n';
      out += render_table("Hallucinations, ground truth (%)", reports, systems,
                          [](const SystemScores& s) { return *s.ground_truth_hallucination_rate; },
                          false);
    }
    return out;
  }

}
