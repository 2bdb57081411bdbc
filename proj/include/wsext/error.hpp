#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wsext {

enum class Errc {
  invalid_term,
  missing_key_arg,
  unexpected_key_arg,
  syntax_error,
  unbound_identifier,
  bad_pattern,
  pattern_violation,
  unsupported_term,
  schema_mismatch,
  malformed_binary,
  bad_timestamp,
  malformed_xml,
  unresolved_key,
  mixed_placement,
  decrypt_failure,
  manifest_mismatch,
  malformed_envelope,
  unknown_algorithm,
  bad_key_length,
  auth_failure,
  plaintext_too_long,
  invalid_peer_key,
  crypto_failure,
  invalid_protocol,
  not_your_turn,
  missing_knowledge,
  check_failed,
  protocol_violation,
  channel_closed,
  timeout,
  bind_error,
  transport_error,
  invalid_config,
};

std::string_view to_string(Errc code) noexcept;
std::optional<Errc> errc_from_string(std::string_view name) noexcept;

/// Every failure raised by the library carries one of the codes above; the
/// message is "<code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace wsext
