#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "multipivot/core.hpp"
#include "multipivot/decoder.hpp"

// Client side of the next-token probability protocol (version 1).
//
//   GET  /v1/meta  -> {"protocol": 1, "vocab_size": int, "model": str, "languages": [str]}
//   POST /v1/step  <- {"session": str, "queries": [{"src_lang", "tgt_lang",
//                      "source_tokens": [int] | null, "source_text": str | null,
//                      "prefix_tokens": [int]}]}
//                  -> {"logprobs": [[float64, ...], ...]}   natural log, one row per query
namespace multipivot::wire {

  constexpr int kProtocolVersion = 1;
  constexpr double kWireTolerance = 1e-4;
  constexpr const char* kEndpointEnv = "MULTIPIVOT_ENDPOINT";

  struct EndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    int timeout_ms = 30000;
    std::size_t max_batch = 64;
    int retries = 2;
    std::string session = "default";
    std::optional<std::string> bearer_token;
    TokenId eos_id = 2;

    void validate() const;
  };

  // Uses MULTIPIVOT_ENDPOINT when base_url is empty.
  EndpointConfig resolve_endpoint(EndpointConfig config);
  EndpointConfig endpoint_config_from_toml(std::string_view toml_text);

  struct ModelMeta {
    int protocol = 0;
    std::size_t vocab_size = 0;
    std::string model;
    std::vector<std::string> languages;

    bool operator==(const ModelMeta&) const = default;
  };

  ModelMeta parse_meta(const nlohmann::json& j);

  nlohmann::json encode_step_request(std::string_view session, std::span<const StepQuery> queries);

  // Validates a /v1/step response body against the expected row count and
  // vocabulary size, then renormalizes each row.
  std::vector<StepDistribution> decode_step_response(std::string_view body,
                                                     std::size_t num_queries,
                                                     std::size_t vocab_size);

  class Client {
  public:
    explicit Client(EndpointConfig config);

    const EndpointConfig& config() const {
      return _config;
    }

    // Fetches and caches the server metadata; later calls return the cache.
    const ModelMeta& handshake();

    // One POST for at most max_batch queries.
    std::vector<StepDistribution> fetch_step_batch(std::span<const StepQuery> queries);

  private:
    std::string request(const std::string& path, const std::string* body);

    EndpointConfig _config;
    std::mutex _meta_mutex;
    std::optional<ModelMeta> _meta;
  };

  class WireScorer : public Scorer {
  public:
    explicit WireScorer(std::shared_ptr<Client> client);

    std::size_t vocab_size() const override {
      return _vocab_size;
    }
    TokenId eos_id() const override {
      return _client->config().eos_id;
    }
    // Splits the queries into max_batch chunks.
    std::vector<StepDistribution> score(std::span<const StepQuery> queries) override;

  private:
    std::shared_ptr<Client> _client;
    std::size_t _vocab_size;
  };

}
