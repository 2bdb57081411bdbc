#include "wsext/error.hpp"

namespace wsext {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_term: return "InvalidTerm";
    case Errc::missing_key_arg: return "MissingKeyArg";
    case Errc::unexpected_key_arg: return "UnexpectedKeyArg";
    case Errc::syntax_error: return "SyntaxError";
    case Errc::unbound_identifier: return "UnboundIdentifier";
    case Errc::bad_pattern: return "BadPattern";
    case Errc::pattern_violation: return "PatternViolation";
    case Errc::unsupported_term: return "UnsupportedTerm";
    case Errc::schema_mismatch: return "SchemaMismatch";
    case Errc::malformed_binary: return "MalformedBinary";
    case Errc::bad_timestamp: return "BadTimestamp";
    case Errc::malformed_xml: return "MalformedXml";
    case Errc::unresolved_key: return "UnresolvedKey";
    case Errc::mixed_placement: return "MixedPlacement";
    case Errc::decrypt_failure: return "DecryptFailure";
    case Errc::manifest_mismatch: return "ManifestMismatch";
    case Errc::malformed_envelope: return "MalformedEnvelope";
    case Errc::unknown_algorithm: return "UnknownAlgorithm";
    case Errc::bad_key_length: return "BadKeyLength";
    case Errc::auth_failure: return "AuthFailure";
    case Errc::plaintext_too_long: return "PlaintextTooLong";
    case Errc::invalid_peer_key: return "InvalidPeerKey";
    case Errc::crypto_failure: return "CryptoFailure";
    case Errc::invalid_protocol: return "InvalidProtocol";
    case Errc::not_your_turn: return "NotYourTurn";
    case Errc::missing_knowledge: return "MissingKnowledge";
    case Errc::check_failed: return "CheckFailed";
    case Errc::protocol_violation: return "ProtocolViolation";
    case Errc::channel_closed: return "ChannelClosed";
    case Errc::timeout: return "Timeout";
    case Errc::bind_error: return "BindError";
    case Errc::transport_error: return "TransportError";
    case Errc::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

std::optional<Errc> errc_from_string(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(Errc::invalid_config); ++i)
    if (to_string(static_cast<Errc>(i)) == name) return static_cast<Errc>(i);
  return std::nullopt;
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

}  // namespace wsext
