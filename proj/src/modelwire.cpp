#include "multipivot/modelwire.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace multipivot::wire {

  using nlohmann::json;

  void EndpointConfig::validate() const {
    if (base_url.empty())
      throw InvalidArgument("endpoint base URL is not set (config or " + std::string(kEndpointEnv) + ")");
    if (!base_url.starts_with("http://"))
      throw InvalidArgument("endpoint URL must start with http://");
    if (timeout_ms <= 0)
      throw InvalidArgument("timeout_ms must be positive");
    if (max_batch < 1)
      throw InvalidArgument("max_batch must be at least 1");
    if (retries < 0)
      throw InvalidArgument("retries must be non-negative");
    if (eos_id < 0)
      throw InvalidArgument("eos_id must be non-negative");
  }

  EndpointConfig resolve_endpoint(EndpointConfig config) {
    if (config.base_url.empty()) {
      if (const char* env = std::getenv(kEndpointEnv))
        config.base_url = env;
    }
    while (config.base_url.size() > 1 && config.base_url.back() == '/')
      config.base_url.pop_back();
    return config;
  }

  ModelMeta parse_meta(const json& j) {
    ModelMeta meta;
    try {
      meta.protocol = j.at("protocol").get<int>();
      if (meta.protocol != kProtocolVersion)
        throw ProtocolError("server speaks protocol " + std::to_string(meta.protocol)
                            + ", client speaks " + std::to_string(kProtocolVersion));
      const auto vocab_size = j.at("vocab_size").get<std::int64_t>();
      if (vocab_size < 2)
        throw ProtocolError("advertised vocab_size " + std::to_string(vocab_size) + " is too small");
      meta.vocab_size = static_cast<std::size_t>(vocab_size);
      meta.model = j.value("model", std::string());
      meta.languages = j.value("languages", std::vector<std::string>{});
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("malformed /v1/meta response: ") + e.what());
    }
    return meta;
  }

  json encode_step_request(std::string_view session, std::span<const StepQuery> queries) {
    json items = json::array();
    for (const auto& q : queries) {
      const SourceEntry& src = *q.source;
      json item{{"src_lang", src.lang},
                {"tgt_lang", q.target_lang},
                {"source_tokens", nullptr},
                {"source_text", nullptr},
                {"prefix_tokens", std::vector<TokenId>(q.prefix.begin(), q.prefix.end())}};
      if (!src.tokens.empty())
        item["source_tokens"] = src.tokens;
      if (src.text)
        item["source_text"] = *src.text;
      items.push_back(std::move(item));
    }
    return json{{"session", session}, {"queries", std::move(items)}};
  }

  namespace {

    // Python's json module writes bare NaN/Infinity/-Infinity. Outside string
    // literals, -Infinity becomes null and the other two become strings that
    // fail row validation.
    std::string sanitize_nonfinite(std::string_view body) {
      std::string out;
      out.reserve(body.size());
      bool in_string = false;
      for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (in_string) {
          out += c;
          if (c == '\\' && i + 1 < body.size())
            out += body[++i];
          else if (c == '"')
            in_string = false;
          continue;
        }
        if (c == '"') {
          in_string = true;
          out += c;
        } else if (body.substr(i).starts_with("-Infinity")) {
          out += "null";
          i += 8;
        } else if (body.substr(i).starts_with("Infinity")) {
          out += "\"Infinity\"";
          i += 7;
        } else if (body.substr(i).starts_with("NaN")) {
          out += "\"NaN\"";
          i += 2;
        } else {
          out += c;
        }
      }
      return out;
    }

    StepDistribution decode_row(const json& row, std::size_t index, std::size_t vocab_size) {
      if (!row.is_array())
        throw ProtocolError("logprobs row is not an array", index);
      if (row.size() != vocab_size)
        throw ProtocolError("expected " + std::to_string(vocab_size) + " log-probabilities, got "
                              + std::to_string(row.size()),
                            index);
      std::vector<double> values;
      values.reserve(row.size());
      for (const auto& v : row) {
        if (v.is_null()) {
          values.push_back(kNegInf);
        } else if (v.is_number()) {
          const double x = v.get<double>();
          if (std::isnan(x) || x == std::numeric_limits<double>::infinity())
            throw ProtocolError("non-finite log-probability", index);
          values.push_back(x);
        } else if (v.is_string() && (v == "-inf" || v == "-Infinity")) {
          values.push_back(kNegInf);
        } else {
          throw ProtocolError("invalid log-probability " + v.dump(), index);
        }
        if (values.back() > 0)
          throw ProtocolError("positive log-probability", index);
      }
      const double lse = log_sum_exp(values);
      if (!(std::abs(lse) <= kWireTolerance))
        throw ProtocolError("log-sum-exp " + std::to_string(lse) + " is not within "
                              + std::to_string(kWireTolerance) + " of 0",
                            index);
      return StepDistribution::renormalized(std::move(values));
    }

  }

  std::vector<StepDistribution> decode_step_response(std::string_view body,
                                                     std::size_t num_queries,
                                                     std::size_t vocab_size) {
    json j;
    try {
      j = json::parse(sanitize_nonfinite(body));
    } catch (const json::parse_error& e) {
      throw ProtocolError(std::string("malformed /v1/step response: ") + e.what());
    }
    if (!j.is_object() || !j.contains("logprobs") || !j.at("logprobs").is_array())
      throw ProtocolError("response has no logprobs array");
    const auto& rows = j.at("logprobs");
    if (rows.size() != num_queries)
      throw ProtocolError("expected " + std::to_string(num_queries) + " rows, got "
                          + std::to_string(rows.size()));
    std::vector<StepDistribution> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.push_back(decode_row(rows[i], i, vocab_size));
    return out;
  }

  Client::Client(EndpointConfig config)
    : _config(resolve_endpoint(std::move(config))) {
    _config.validate();
  }

  std::string Client::request(const std::string& path, const std::string* body) {
    const auto timeout = std::chrono::milliseconds(_config.timeout_ms);
    std::string last_error;
    for (int attempt = 0; attempt <= _config.retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));

      // One connection per request keeps the client usable from many threads.
      httplib::Client http(_config.base_url);
      http.set_connection_timeout(timeout);
      http.set_read_timeout(timeout);
      http.set_write_timeout(timeout);
      if (_config.bearer_token)
        http.set_bearer_token_auth(*_config.bearer_token);

      const auto result = body ? http.Post(path, *body, "application/json") : http.Get(path);
      if (!result) {
        last_error = "transport error: " + httplib::to_string(result.error());
        continue;
      }
      const int status = result->status;
      if (status == 200)
        return result->body;
      last_error = "HTTP " + std::to_string(status) + " from " + path;
      if (status >= 500 || status == 429)
        continue;
      throw BackendError(last_error + ": " + result->body);
    }
    throw BackendError(last_error + " (after " + std::to_string(_config.retries + 1) + " attempts)");
  }

  const ModelMeta& Client::handshake() {
    std::lock_guard lock(_meta_mutex);
    if (!_meta) {
      const std::string body = request("/v1/meta", nullptr);
      json j;
      try {
        j = json::parse(body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed /v1/meta response: ") + e.what());
      }
      ModelMeta meta = parse_meta(j);
      if (static_cast<std::size_t>(_config.eos_id) >= meta.vocab_size)
        throw ProtocolError("configured eos_id is outside the advertised vocabulary");
      _meta = std::move(meta);
    }
    return *_meta;
  }

  std::vector<StepDistribution> Client::fetch_step_batch(std::span<const StepQuery> queries) {
    if (queries.empty())
      return {};
    if (queries.size() > _config.max_batch)
      throw InvalidArgument("batch of " + std::to_string(queries.size())
                            + " queries exceeds max_batch " + std::to_string(_config.max_batch));
    const std::size_t vocab_size = handshake().vocab_size;
    for (const auto& q : queries) {
      for (const TokenId t : q.prefix) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
          throw InvalidArgument("prefix token " + std::to_string(t) + " outside the server vocabulary");
      }
    }
    const std::string body = encode_step_request(_config.session, queries).dump();
    return decode_step_response(request("/v1/step", &body), queries.size(), vocab_size);
  }

  WireScorer::WireScorer(std::shared_ptr<Client> client)
    : _client(std::move(client))
    , _vocab_size(_client->handshake().vocab_size) {
  }

  std::vector<StepDistribution> WireScorer::score(std::span<const StepQuery> queries) {
    std::vector<StepDistribution> out;
    out.reserve(queries.size());
    const std::size_t chunk = _client->config().max_batch;
    for (std::size_t begin = 0; begin < queries.size(); begin += chunk) {
      const std::size_t n = std::min(chunk, queries.size() - begin);
      auto part = _client->fetch_step_batch(queries.subspan(begin, n));
      for (auto& d : part)
        out.push_back(std::move(d));
    }
    return out;
  }

}
