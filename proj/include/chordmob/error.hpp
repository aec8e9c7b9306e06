#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chordmob {

enum class Errc {
  malformed_uid,
  invalid_argument,
  lookup_timeout,
  join_failed,
  publish_failed,
  not_found,
  stale_phase,
  init_timeout,
  asconf_timeout,
  not_established,
  config_invalid,
  io_error,
};

std::string_view to_string(Errc code);

// Every failure the library reports carries one of the Errc kinds above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace chordmob
