#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "multipivot/modelwire.hpp"
#include "multipivot/pipeline.hpp"
#include "multipivot/synth.hpp"

namespace multipivot {

  namespace {

    // Reads typed keys from one TOML table and rejects keys nobody asked for.
    class Section {
    public:
      Section(const toml::table& table, std::string name)
        : _table(table)
        , _name(std::move(name)) {
      }

      template <typename T>
      std::optional<T> get(std::string_view key) {
        _used.emplace(key);
        const auto node = _table[key];
        if (!node)
          return std::nullopt;
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
          const auto v = node.template value<std::int64_t>();
          if (!v || *v < 0)
            throw InvalidArgument(path(key) + " must be a non-negative integer");
          return static_cast<T>(*v);
        } else {
          const auto v = node.template value<T>();
          if (!v)
            throw InvalidArgument(path(key) + " has the wrong type");
          return v;
        }
      }

      template <typename T>
      void read(std::string_view key, T& out) {
        if (auto v = get<T>(key))
          out = *v;
      }

      template <typename T>
      void read(std::string_view key, std::optional<T>& out) {
        if (auto v = get<T>(key))
          out = *v;
      }

      const toml::table* table(std::string_view key) {
        _used.emplace(key);
        const auto node = _table[key];
        if (!node)
          return nullptr;
        if (!node.is_table())
          throw InvalidArgument(path(key) + " must be a table");
        return node.as_table();
      }

      const toml::array* array(std::string_view key) {
        _used.emplace(key);
        const auto node = _table[key];
        if (!node)
          return nullptr;
        if (!node.is_array())
          throw InvalidArgument(path(key) + " must be an array");
        return node.as_array();
      }

      std::string path(std::string_view key) const {
        return _name.empty() ? std::string(key) : _name + "." + std::string(key);
      }

      void finish() const {
        for (const auto& [key, value] : _table) {
          if (!_used.contains(key.str()))
            throw InvalidArgument("unknown config key '" + path(key.str()) + "'");
        }
      }

    private:
      const toml::table& _table;
      std::string _name;
      std::set<std::string, std::less<>> _used;
    };

    toml::table parse_toml(std::string_view text) {
      try {
        return toml::parse(text);
      } catch (const toml::parse_error& e) {
        std::ostringstream message;
        message << "invalid TOML: " << e.description() << " (line " << e.source().begin.line << ")";
        throw InvalidArgument(message.str());
      }
    }

    std::string read_file(const std::string& path) {
      std::ifstream in(path);
      if (!in)
        throw std::runtime_error("cannot open config '" + path + "'");
      std::ostringstream buffer;
      buffer << in.rdbuf();
      return buffer.str();
    }

    template <typename T>
    void read_size(Section& s, std::string_view key, T& out) {
      if (auto v = s.get<std::size_t>(key))
        out = static_cast<T>(*v);
    }

    void read_decode(const toml::table* table, const std::string& name, DecodeParams& params) {
      if (!table)
        return;
      Section s(*table, name);
      read_size(s, "beam_size", params.beam_size);
      read_size(s, "max_len", params.max_len);
      if (auto v = s.get<std::string>("length_normalization"))
        params.length_normalization = length_normalization_from_string(*v);
      s.read("renormalize_maxens", params.renormalize_maxens);
      s.finish();
    }

    void read_eval(const toml::table* table, metrics::EvalOptions& eval) {
      if (!table)
        return;
      Section s(*table, "eval");
      s.read("chrf_threshold", eval.chrf_threshold);
      read_size(s, "chrf_order", eval.chrf.char_order);
      s.read("chrf_beta", eval.chrf.beta);
      read_size(s, "tng_n", eval.tng.n);
      read_size(s, "tng_threshold", eval.tng.t);
      read_size(s, "bootstrap_resamples", eval.bootstrap.resamples);
      s.read("alpha", eval.bootstrap.alpha);
      read_size(s, "bootstrap_seed", eval.bootstrap.seed);
      s.finish();
      eval.chrf.validate();
      eval.tng.validate();
      eval.bootstrap.validate();
    }

    void read_decode_tables(Section& top, DecodeParams& pivot, DecodeParams& final) {
      if (const auto* decode = top.table("decode")) {
        Section d(*decode, "decode");
        read_decode(d.table("pivot"), "decode.pivot", pivot);
        read_decode(d.table("final"), "decode.final", final);
        d.finish();
      }
    }

    std::vector<std::string> string_list(const toml::array* array, const std::string& name) {
      std::vector<std::string> out;
      if (!array)
        return out;
      for (const auto& item : *array) {
        const auto v = item.value<std::string>();
        if (!v)
          throw InvalidArgument(name + " must contain strings");
        out.push_back(*v);
      }
      return out;
    }

  }

  RunSettings run_settings_from_toml(std::string_view toml_text) {
    const toml::table root = parse_toml(toml_text);
    Section top(root, "");
    RunSettings settings;
    top.read("source_lang", settings.run.source_lang);
    top.read("target_lang", settings.run.target_lang);
    if (const auto* pivots = top.array("pivots"))
      settings.run.pivots = string_list(pivots, "pivots");
    for (const auto& id : string_list(top.array("strategies"), "strategies"))
      settings.strategies.push_back(Strategy::parse(id));
    top.read("include_direct_path", settings.run.include_direct_path);
    read_size(top, "workers", settings.options.workers);
    read_decode_tables(top, settings.run.pivot_decode, settings.run.final_decode);
    read_eval(top.table("eval"), settings.options.eval);
    top.table("endpoint");  // read separately by the wire client
    top.finish();
    return settings;
  }

  RunSettings load_run_settings(const std::string& path) {
    return run_settings_from_toml(read_file(path));
  }

  namespace wire {

    EndpointConfig endpoint_config_from_toml(std::string_view toml_text) {
      const toml::table root = parse_toml(toml_text);
      EndpointConfig config;
      const auto node = root["endpoint"];
      if (!node)
        return config;
      if (!node.is_table())
        throw InvalidArgument("endpoint must be a table");
      Section s(*node.as_table(), "endpoint");
      s.read("base_url", config.base_url);
      if (auto v = s.get<std::int64_t>("timeout_ms"))
        config.timeout_ms = static_cast<int>(*v);
      read_size(s, "max_batch", config.max_batch);
      if (auto v = s.get<std::int64_t>("retries"))
        config.retries = static_cast<int>(*v);
      s.read("session", config.session);
      s.read("bearer_token", config.bearer_token);
      if (auto v = s.get<std::int64_t>("eos_id"))
        config.eos_id = static_cast<TokenId>(*v);
      s.finish();
      return config;
    }

  }

  namespace synth {

    ExperimentConfig experiment_config_from_toml(std::string_view toml_text) {
      const toml::table root = parse_toml(toml_text);
      Section top(root, "");
      ExperimentConfig c;
      read_size(top, "seed", c.seed);
      read_size(top, "vocab_size", c.vocab_size);
      read_size(top, "corpus_size", c.corpus_size);
      read_size(top, "min_len", c.min_len);
      read_size(top, "max_len", c.max_len);
      top.read("source_lang", c.source_lang);
      top.read("target_lang", c.target_lang);
      top.read("single_pivot", c.single_pivot);
      read_size(top, "workers", c.workers);

      if (const auto* t = top.table("attractor")) {
        Section s(*t, "attractor");
        read_size(s, "length", c.attractor_len);
        s.read("trigger_prob", c.trigger_prob);
        s.read("conf", c.attractor_conf);
        s.read("lock_conf", c.lock_conf);
        s.finish();
      }

      if (const auto* t = top.table("channels")) {
        Section s(*t, "channels");
        s.read("honest_fidelity", c.honest_fidelity);
        s.read("weak_fidelity", c.weak_fidelity);
        s.read("direct_fidelity", c.direct_fidelity);
        s.read("pivot_stage_fidelity", c.pivot_stage_fidelity);
        s.read("sticky_share", c.sticky_share);
        s.read("noise_peak", c.noise_peak);
        s.read("pivot_stage_noise", c.pivot_stage_noise);
        s.finish();
      }

      if (const auto* pivots = top.array("pivots")) {
        c.pivots.clear();
        for (const auto& item : *pivots) {
          if (!item.is_table())
            throw InvalidArgument("pivots must be an array of tables");
          Section s(*item.as_table(), "pivots");
          PivotSpec spec;
          s.read("lang", spec.lang);
          s.read("honest_weight", spec.honest_weight);
          s.read("honest_fidelity", spec.honest_fidelity);
          s.read("weak_fidelity", spec.weak_fidelity);
          s.read("attractor_conf", spec.attractor_conf);
          s.finish();
          c.pivots.push_back(std::move(spec));
        }
      }

      read_decode_tables(top, c.pivot_decode, c.final_decode);
      read_eval(top.table("eval"), c.eval);
      top.finish();
      c.validate();
      return c;
    }

    ExperimentConfig load_experiment_config(const std::string& path) {
      return experiment_config_from_toml(read_file(path));
    }

  }

}
