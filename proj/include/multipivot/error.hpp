#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace multipivot {

  // Contract violations by the caller (bad sizes, empty inputs, unknown tokens).
  class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
  };

  // A scorer failed while decoding; carries the step at which it happened.
  class DecodeError : public std::runtime_error {
  public:
    DecodeError(std::size_t step, const std::string& what)
      : std::runtime_error("decode step " + std::to_string(step) + ": " + what)
      , _step(step) {
    }

    std::size_t step() const {
      return _step;
    }

  private:
    std::size_t _step;
  };

  // Transport-level failure talking to a model backend (after retries).
  class BackendError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
  };

  // The backend answered, but the answer violates the wire contract.
  class ProtocolError : public std::runtime_error {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    ProtocolError(const std::string& what, std::size_t query_index = npos)
      : std::runtime_error(query_index == npos
                             ? what
                             : "query " + std::to_string(query_index) + ": " + what)
      , _query_index(query_index) {
    }

    std::size_t query_index() const {
      return _query_index;
    }

  private:
    std::size_t _query_index;
  };

}
