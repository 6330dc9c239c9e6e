#pragma once

#include <stdexcept>
#include <string>

namespace nwf {

// Error classes map 1:1 onto CLI exit codes.
enum class Errc {
  io = 3,        // file missing / unreadable / unwritable
  format = 4,    // malformed container, model file or image
  model = 5,     // model hash mismatch, wrong geometry for model
  numeric = 6,   // overflow, NaN/Inf, value out of codable range
  contract = 7,  // shape mismatch, bad argument
  decode = 8,    // corrupted or truncated bitstream
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace nwf
