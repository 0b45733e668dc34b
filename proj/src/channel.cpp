#include "multipivot/synth.hpp"

#include <algorithm>

#include "multipivot/random.hpp"

namespace multipivot::synth {

  CipherLanguage::CipherLanguage(std::string code, std::size_t content_size, std::uint64_t seed)
    : _code(std::move(code))
    , _forward(content_size)
    , _inverse(content_size) {
    for (std::size_t i = 0; i < content_size; ++i)
      _forward[i] = static_cast<TokenId>(i);
    RandomStream rng(seed);
    for (std::size_t i = content_size; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i));
      std::swap(_forward[i - 1], _forward[j]);
    }
    for (std::size_t i = 0; i < content_size; ++i)
      _inverse[static_cast<std::size_t>(_forward[i])] = static_cast<TokenId>(i);
  }

  TokenId CipherLanguage::encode(TokenId base) const {
    if (base < 0 || static_cast<std::size_t>(base) >= _forward.size())
      throw InvalidArgument("token " + std::to_string(base) + " is not a content token");
    return _forward[static_cast<std::size_t>(base)];
  }

  TokenId CipherLanguage::decode(TokenId token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= _inverse.size())
      throw InvalidArgument("token " + std::to_string(token) + " is not a content token");
    return _inverse[static_cast<std::size_t>(token)];
  }

  void AttractorConfig::validate(TokenId eos_id) const {
    if (!(trigger_prob >= 0 && trigger_prob <= 1))
      throw InvalidArgument("trigger_prob must lie in [0, 1]");
    if (!(attractor_conf > 0 && attractor_conf < 1))
      throw InvalidArgument("attractor_conf must lie in (0, 1)");
    if (lock_conf && !(*lock_conf > 0 && *lock_conf < 1))
      throw InvalidArgument("lock_conf must lie in (0, 1)");
    if (!sequence.empty() && !is_complete(sequence, eos_id))
      throw InvalidArgument("attractor sequence must end with eos");
  }

  void ChannelModel::validate() const {
    if (mapping.size() < 2)
      throw InvalidArgument("channel vocabulary needs at least 2 tokens");
    if (!(fidelity > 0 && fidelity <= 1))
      throw InvalidArgument("fidelity must lie in (0, 1]");
    if (confusion.attractor_share < 0 || confusion.noise_peak < 0
        || confusion.attractor_share + confusion.noise_peak > 1)
      throw InvalidArgument("confusion shares must be non-negative and sum to at most 1");
    attractor.validate(eos_id);
  }

  ChannelModel make_channel(const CipherLanguage& src,
                            const CipherLanguage& tgt,
                            double fidelity,
                            Confusion confusion,
                            AttractorConfig attractor) {
    if (src.content_size() != tgt.content_size())
      throw InvalidArgument("languages do not share a vocabulary");
    const std::size_t content = src.content_size();
    ChannelModel channel;
    channel.src_lang = src.code();
    channel.tgt_lang = tgt.code();
    channel.eos_id = static_cast<TokenId>(content);
    channel.mapping.resize(content + 1);
    for (std::size_t t = 0; t < content; ++t)
      channel.mapping[t] = tgt.encode(src.decode(static_cast<TokenId>(t)));
    channel.mapping[content] = channel.eos_id;
    channel.fidelity = fidelity;
    channel.confusion = confusion;
    channel.attractor = std::move(attractor);
    channel.validate();
    return channel;
  }

  StepDistribution channel_step(const ChannelModel& channel,
                                std::span<const TokenId> source,
                                std::span<const TokenId> prefix,
                                ChannelMode mode) {
    const std::size_t vocab = channel.vocab_size();
    const TokenId eos = channel.eos_id;
    const std::size_t pos = prefix.size();

    std::span<const TokenId> content = source;
    if (!content.empty() && content.back() == eos)
      content = content.first(content.size() - 1);

    const auto& attractor = channel.attractor.sequence;
    const TokenId attractor_token = pos < attractor.size() ? attractor[pos] : eos;

    TokenId target;
    double main_mass;
    if (mode == ChannelMode::honest) {
      if (pos < content.size()) {
        const TokenId t = content[pos];
        if (t < 0 || static_cast<std::size_t>(t) >= vocab)
          throw InvalidArgument("source token " + std::to_string(t) + " outside vocabulary");
        target = channel.mapping[static_cast<std::size_t>(t)];
      } else {
        target = eos;
      }
      main_mass = channel.fidelity;
    } else {
      if (attractor.empty())
        throw InvalidArgument("triggered channel has no attractor sequence");
      target = attractor_token;
      const bool locked = pos > 0 && pos <= attractor.size()
                          && std::equal(prefix.begin(), prefix.end(), attractor.begin());
      main_mass = locked && channel.attractor.lock_conf ? *channel.attractor.lock_conf
                                                        : channel.attractor.attractor_conf;
    }

    const double error_mass = 1.0 - main_mass;
    std::vector<double> probs(vocab, 0.0);
    probs[static_cast<std::size_t>(target)] += main_mass;

    double sticky = 0;
    if (mode == ChannelMode::honest && !attractor.empty()) {
      sticky = channel.confusion.attractor_share * error_mass;
      probs[static_cast<std::size_t>(attractor_token)] += sticky;
    }

    double noise = 0;
    if (channel.confusion.noise_peak > 0) {
      std::uint64_t h = channel.confusion.noise_key;
      for (const TokenId t : source)
        h = hash_combine(h, static_cast<std::uint64_t>(t));
      h = hash_combine(h, pos);
      const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      noise = channel.confusion.noise_peak * u * error_mass;
      const auto slot = static_cast<std::size_t>(hash_combine(h, 0x5eed) % (vocab - 1));
      const std::size_t distractor =
        slot < static_cast<std::size_t>(target) ? slot : slot + 1;
      probs[distractor] += noise;
    }

    const double uniform = (error_mass - sticky - noise) / static_cast<double>(vocab - 1);
    if (uniform > 0) {
      for (std::size_t y = 0; y < vocab; ++y) {
        if (y != static_cast<std::size_t>(target))
          probs[y] += uniform;
      }
    }
    return StepDistribution::from_probs(probs, 1e-9);
  }

  ChannelScorer::ChannelScorer(std::size_t vocab_size, TokenId eos_id)
    : _vocab_size(vocab_size)
    , _eos_id(eos_id) {
  }

  void ChannelScorer::add(ChannelModel channel, ChannelMode mode) {
    if (channel.vocab_size() != _vocab_size)
      throw InvalidArgument("channel vocabulary does not match the scorer");
    auto key = std::make_pair(channel.src_lang, channel.tgt_lang);
    _channels.insert_or_assign(std::move(key), std::make_pair(std::move(channel), mode));
  }

  const ChannelModel& ChannelScorer::channel(std::string_view src, std::string_view tgt) const {
    auto it = _channels.find(std::make_pair(std::string(src), std::string(tgt)));
    if (it == _channels.end())
      throw InvalidArgument("no channel " + std::string(src) + " -> " + std::string(tgt));
    return it->second.first;
  }

  ChannelMode ChannelScorer::mode(std::string_view src, std::string_view tgt) const {
    auto it = _channels.find(std::make_pair(std::string(src), std::string(tgt)));
    if (it == _channels.end())
      throw InvalidArgument("no channel " + std::string(src) + " -> " + std::string(tgt));
    return it->second.second;
  }

  std::vector<StepDistribution> ChannelScorer::score(std::span<const StepQuery> queries) {
    std::vector<StepDistribution> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      auto it = _channels.find(std::make_pair(q.source->lang, std::string(q.target_lang)));
      if (it == _channels.end())
        throw InvalidArgument("no channel " + q.source->lang + " -> " + std::string(q.target_lang));
      const auto& [channel, mode] = it->second;
      out.push_back(channel_step(channel, q.source->tokens, q.prefix, mode));
    }
    return out;
  }

}
