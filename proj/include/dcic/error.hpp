#pragma once

#include <stdexcept>
#include <string>

namespace dcic {

/// Failure categories surfaced by the core library. The C API maps each one
/// onto a distinct status code.
enum class Errc {
  invalid_argument,
  shape_mismatch,
  io,
  bad_magic,
  unsupported_version,
  corrupt,
  truncated,
  kind_mismatch,
  numeric,
  tape_consumed,
  usage,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace dcic
