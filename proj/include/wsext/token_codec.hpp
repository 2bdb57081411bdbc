#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "wsext/term.hpp"
#include "wsext/xml.hpp"

namespace wsext {

inline constexpr std::string_view kSoapNamespace = "http://www.w3.org/2003/05/soap-envelope";
inline constexpr std::string_view kWsseNamespace =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-secext-1.0.xsd";
inline constexpr std::string_view kWsuNamespace =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-utility-1.0.xsd";
inline constexpr std::string_view kBase64EncodingType =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-soap-message-security-1.0#Base64Binary";
/// Namespace of the extension tokens (DistinguishedNameToken, KeyToken, ...).
inline constexpr std::string_view kDefaultExtensionNamespace = "urn:wsext:token-extensions:2009";

enum class SchemaId {
  UsernameToken,
  DistinguishedNameToken,
  UserDomainNameToken,
  UserIPNameToken,
  DomainNameToken,
  KeyToken,
  BinaryNonceToken,
  TimestampToken,
};

std::string_view to_string(SchemaId id) noexcept;
std::optional<SchemaId> schema_from_string(std::string_view s) noexcept;

struct TokenElement {
  SchemaId schema_id;
  std::string xml;
  Term source_term;
};

enum class PatternKind { user_domain, ipv4, ipv6, domain };

std::string_view to_string(PatternKind k) noexcept;
std::optional<PatternKind> pattern_kind_from_string(std::string_view s) noexcept;

struct ValidationPattern {
  SchemaId schema_id;
  PatternKind kind;
  std::string_view pattern;
};

/// The four restriction patterns, verbatim.
const ValidationPattern& validation_pattern(PatternKind kind) noexcept;

struct CodecOptions {
  /// RFC-grade checks (real IPv4 octets, IPv6 with "::", DNS labels) instead
  /// of the schema patterns.
  bool strict = false;
  std::string extension_namespace{kDefaultExtensionNamespace};
};

bool validate_name(PatternKind kind, std::string_view value, bool strict = false);

/// Schema a leaf term encodes to. Throws UnsupportedTerm for non-leaves and data.
SchemaId schema_of(const Term& t);

/// Throws PatternViolation or UnsupportedTerm.
TokenElement encode_token(const Term& t, const CodecOptions& options = {});

/// Throws SchemaMismatch, PatternViolation, MalformedBinary or BadTimestamp.
Term decode_token(const xml::Element& element, const CodecOptions& options = {});
Term decode_token(std::string_view xml, const CodecOptions& options = {});

}  // namespace wsext
