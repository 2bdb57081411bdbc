#include "wsext/token_codec.hpp"

#include <arpa/inet.h>

#include <array>
#include <cctype>

#include "wsext/error.hpp"
#include "wsext/xsd_pattern.hpp"

namespace wsext {

namespace {

constexpr std::array<std::pair<SchemaId, std::string_view>, 8> kSchemaNames{{
    {SchemaId::UsernameToken, "UsernameToken"},
    {SchemaId::DistinguishedNameToken, "DistinguishedNameToken"},
    {SchemaId::UserDomainNameToken, "UserDomainNameToken"},
    {SchemaId::UserIPNameToken, "UserIPNameToken"},
    {SchemaId::DomainNameToken, "DomainNameToken"},
    {SchemaId::KeyToken, "KeyToken"},
    {SchemaId::BinaryNonceToken, "BinaryNonceToken"},
    {SchemaId::TimestampToken, "TimestampToken"},
}};

const std::array<ValidationPattern, 4> kPatterns{{
    {SchemaId::UserDomainNameToken, PatternKind::user_domain, R"((\w+\.|\w+)+)"},
    {SchemaId::UserIPNameToken, PatternKind::ipv4, R"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})"},
    {SchemaId::UserIPNameToken, PatternKind::ipv6, R"(([0-9a-fA-F]{1,4}:){7}[0-9a-fA-F]{1,4})"},
    {SchemaId::DomainNameToken, PatternKind::domain, R"((\w+\.\w+)+)"},
}};

constexpr std::array<std::pair<PatternKind, std::string_view>, 4> kPatternKindNames{{
    {PatternKind::user_domain, "userdomain"},
    {PatternKind::ipv4, "ipv4"},
    {PatternKind::ipv6, "ipv6"},
    {PatternKind::domain, "domain"},
}};

const XsdPattern& compiled(PatternKind kind) {
  static const std::array<XsdPattern, 4> kCompiled{
      XsdPattern::compile(kPatterns[0].pattern),
      XsdPattern::compile(kPatterns[1].pattern),
      XsdPattern::compile(kPatterns[2].pattern),
      XsdPattern::compile(kPatterns[3].pattern),
  };
  return kCompiled[static_cast<std::size_t>(kind)];
}

bool dns_label_ok(std::string_view label) {
  if (label.empty() || label.size() > 63 || label.front() == '-' || label.back() == '-') return false;
  for (char c : label)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-')) return false;
  return true;
}

bool dns_name_ok(std::string_view name, std::size_t min_labels) {
  if (name.empty() || name.size() > 253) return false;
  std::size_t labels = 0;
  std::size_t start = 0;
  while (true) {
    auto dot = name.find('.', start);
    if (!dns_label_ok(name.substr(start, dot == std::string_view::npos ? name.size() - start : dot - start)))
      return false;
    ++labels;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return labels >= min_labels;
}

bool strict_valid(PatternKind kind, std::string_view value) {
  std::string v(value);
  switch (kind) {
    case PatternKind::ipv4: {
      in_addr a{};
      return inet_pton(AF_INET, v.c_str(), &a) == 1;
    }
    case PatternKind::ipv6: {
      in6_addr a{};
      return inet_pton(AF_INET6, v.c_str(), &a) == 1;
    }
    case PatternKind::domain: return dns_name_ok(value, 2);
    case PatternKind::user_domain: return dns_name_ok(value, 1);
  }
  return false;
}

void check_pattern(PatternKind kind, std::string_view value, const CodecOptions& options) {
  if (!validate_name(kind, value, options.strict))
    throw Error(Errc::pattern_violation,
                "'" + std::string(value) + "' does not match " + std::string(to_string(kind)) + " pattern " +
                    (options.strict ? std::string("(strict)") : std::string(validation_pattern(kind).pattern)));
}

void check_text(std::string_view text) {
  if (!xml::is_xml_text(text)) throw Error(Errc::unsupported_term, "text is not representable in XML");
}

std::string nonce_value_type(const CodecOptions& options) { return options.extension_namespace + "#Nonce"; }

[[noreturn]] void mismatch(const std::string& what) { throw Error(Errc::schema_mismatch, what); }

bool blank(std::string_view s) {
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

// A simple-content element: no attributes, no children.
const std::string& simple_text(const xml::Element& e) {
  if (!e.attributes.empty()) mismatch("unexpected attribute on " + e.name);
  if (!e.children.empty()) mismatch(e.name + " must have text content only");
  return e.text;
}

void expect_container(const xml::Element& e, std::size_t children) {
  if (!blank(e.text)) mismatch(e.name + " must not have text content");
  if (e.children.size() != children)
    mismatch(e.name + " expects " + std::to_string(children) + " child element(s)");
}

}  // namespace

std::string_view to_string(SchemaId id) noexcept {
  for (auto [k, v] : kSchemaNames)
    if (k == id) return v;
  return "?";
}

std::optional<SchemaId> schema_from_string(std::string_view s) noexcept {
  for (auto [k, v] : kSchemaNames)
    if (v == s) return k;
  return std::nullopt;
}

std::string_view to_string(PatternKind k) noexcept {
  for (auto [kind, name] : kPatternKindNames)
    if (kind == k) return name;
  return "?";
}

std::optional<PatternKind> pattern_kind_from_string(std::string_view s) noexcept {
  for (auto [kind, name] : kPatternKindNames)
    if (name == s) return kind;
  return std::nullopt;
}

const ValidationPattern& validation_pattern(PatternKind kind) noexcept {
  return kPatterns[static_cast<std::size_t>(kind)];
}

bool validate_name(PatternKind kind, std::string_view value, bool strict) {
  if (strict) return strict_valid(kind, value);
  return compiled(kind).matches(value);
}

SchemaId schema_of(const Term& t) {
  if (auto* n = t.as<NameTerm>()) {
    static constexpr SchemaId kByIndex[] = {SchemaId::DistinguishedNameToken, SchemaId::UserDomainNameToken,
                                            SchemaId::UserIPNameToken,        SchemaId::UserIPNameToken,
                                            SchemaId::DomainNameToken,        SchemaId::UsernameToken};
    return kByIndex[n->name.index()];
  }
  if (auto* n = t.as<NonceTerm>())
    return std::holds_alternative<RandomNonce>(n->nonce) ? SchemaId::BinaryNonceToken : SchemaId::TimestampToken;
  if (t.is<KeyTerm>()) return SchemaId::KeyToken;
  throw Error(Errc::unsupported_term, std::string(kind_name(t)) + " terms are not security tokens");
}

TokenElement encode_token(const Term& t, const CodecOptions& options) {
  SchemaId id = schema_of(t);
  std::string out;
  if (auto* n = t.as<NameTerm>()) {
    if (auto* dn = std::get_if<DistinguishedName>(&n->name)) {
      for (const auto* f : {&dn->organization, &dn->organizational_unit, &dn->common_name, &dn->country})
        check_text(*f);
      xml::open_tag(out, "DistinguishedNameToken");
      xml::text_element(out, "Organization", dn->organization);
      xml::text_element(out, "OrganizationalUnit", dn->organizational_unit);
      xml::text_element(out, "CommonName", dn->common_name);
      xml::text_element(out, "Country", dn->country);
      xml::close_tag(out, "DistinguishedNameToken");
    } else if (auto* ud = std::get_if<UserDomainName>(&n->name)) {
      check_text(ud->user);
      check_pattern(PatternKind::user_domain, ud->domain, options);
      xml::open_tag(out, "UserDomainNameToken");
      xml::text_element(out, "UserName", ud->user);
      xml::text_element(out, "DomainName", ud->domain);
      xml::close_tag(out, "UserDomainNameToken");
    } else if (auto* v4 = std::get_if<IpV4Name>(&n->name)) {
      check_pattern(PatternKind::ipv4, v4->address, options);
      xml::open_tag(out, "UserIPNameToken");
      xml::text_element(out, "IPv4", v4->address);
      xml::close_tag(out, "UserIPNameToken");
    } else if (auto* v6 = std::get_if<IpV6Name>(&n->name)) {
      check_pattern(PatternKind::ipv6, v6->address, options);
      xml::open_tag(out, "UserIPNameToken");
      xml::text_element(out, "IPv6", v6->address);
      xml::close_tag(out, "UserIPNameToken");
    } else if (auto* d = std::get_if<DomainName>(&n->name)) {
      check_pattern(PatternKind::domain, d->domain, options);
      xml::text_element(out, "DomainNameToken", d->domain);
    } else {
      const auto& plain = std::get<PlainName>(n->name);
      check_text(plain.name);
      xml::text_element(out, "wsse:UsernameToken", plain.name);
    }
  } else if (auto* n = t.as<NonceTerm>()) {
    if (auto* r = std::get_if<RandomNonce>(&n->nonce)) {
      xml::open_tag(out, "wsse:BinarySecurityToken",
                    {{"EncodingType", std::string(kBase64EncodingType)}, {"ValueType", nonce_value_type(options)}});
      out += base64_encode(r->bytes);
      xml::close_tag(out, "wsse:BinarySecurityToken");
    } else {
      xml::open_tag(out, "wsu:Timestamp");
      xml::text_element(out, "wsu:Created", format_utc(std::get<Timestamp>(n->nonce).instant));
      xml::close_tag(out, "wsu:Timestamp");
    }
  } else {
    const auto& key = t.as<KeyTerm>()->key;
    bool hex = key.encoding == KeyEncoding::hexBinary;
    xml::open_tag(out, "KeyToken", {{"type", hex ? "hexBinary" : "base64Binary"}});
    xml::text_element(out, "KeyValue", hex ? to_hex(key.bytes) : base64_encode(key.bytes));
    xml::close_tag(out, "KeyToken");
  }
  return TokenElement{id, std::move(out), t};
}

Term decode_token(const xml::Element& e, const CodecOptions& options) {
  if (e.name == "wsse:UsernameToken") {
    const auto& text = simple_text(e);
    if (text.empty()) mismatch("empty UsernameToken");
    return make_name(PlainName{text});
  }
  if (e.name == "DistinguishedNameToken") {
    if (!e.attributes.empty()) mismatch("unexpected attribute on " + e.name);
    expect_container(e, 4);
    static constexpr std::string_view kOrder[] = {"Organization", "OrganizationalUnit", "CommonName", "Country"};
    std::string fields[4];
    for (std::size_t i = 0; i < 4; ++i) {
      if (e.children[i].name != kOrder[i]) mismatch("expected " + std::string(kOrder[i]) + " in position " +
                                                    std::to_string(i + 1));
      fields[i] = simple_text(e.children[i]);
      if (fields[i].empty()) mismatch(std::string(kOrder[i]) + " is empty");
    }
    return make_name(DistinguishedName{fields[0], fields[1], fields[2], fields[3]});
  }
  if (e.name == "UserDomainNameToken") {
    if (!e.attributes.empty()) mismatch("unexpected attribute on " + e.name);
    expect_container(e, 2);
    if (e.children[0].name != "UserName" || e.children[1].name != "DomainName")
      mismatch("UserDomainNameToken expects UserName then DomainName");
    const auto& user = simple_text(e.children[0]);
    const auto& domain = simple_text(e.children[1]);
    if (user.empty()) mismatch("empty UserName");
    check_pattern(PatternKind::user_domain, domain, options);
    return make_name(UserDomainName{user, domain});
  }
  if (e.name == "UserIPNameToken") {
    if (!e.attributes.empty()) mismatch("unexpected attribute on " + e.name);
    expect_container(e, 1);
    const auto& c = e.children[0];
    const auto& address = simple_text(c);
    if (c.name == "IPv4") {
      check_pattern(PatternKind::ipv4, address, options);
      return make_name(IpV4Name{address});
    }
    if (c.name == "IPv6") {
      check_pattern(PatternKind::ipv6, address, options);
      return make_name(IpV6Name{address});
    }
    mismatch("UserIPNameToken expects IPv4 or IPv6");
  }
  if (e.name == "DomainNameToken") {
    const auto& text = simple_text(e);
    check_pattern(PatternKind::domain, text, options);
    return make_name(DomainName{text});
  }
  if (e.name == "KeyToken") {
    if (e.attributes.size() != 1 || e.attributes[0].first != "type") mismatch("KeyToken requires exactly a type attribute");
    const auto& type = e.attributes[0].second;
    KeyMaterial key;
    if (type == "base64Binary") key.encoding = KeyEncoding::base64Binary;
    else if (type == "hexBinary") key.encoding = KeyEncoding::hexBinary;
    else mismatch("KeyToken type '" + type + "' is not base64Binary or hexBinary");
    expect_container(e, 1);
    if (e.children[0].name != "KeyValue") mismatch("KeyToken expects KeyValue");
    const auto& value = simple_text(e.children[0]);
    auto bytes = key.encoding == KeyEncoding::hexBinary ? from_hex(value) : base64_decode(value);
    if (!bytes || bytes->empty()) throw Error(Errc::malformed_binary, "KeyValue is not valid " + type);
    key.bytes = std::move(*bytes);
    return make_key(std::move(key));
  }
  if (e.name == "wsse:BinarySecurityToken") {
    auto value_type = e.attribute("ValueType");
    auto encoding = e.attribute("EncodingType");
    if (e.attributes.size() != 2 || !value_type || !encoding) mismatch("BinarySecurityToken attributes");
    if (*value_type != nonce_value_type(options)) mismatch("BinarySecurityToken is not a nonce token");
    if (*encoding != kBase64EncodingType) mismatch("nonce tokens must be Base64Binary");
    if (!e.children.empty()) mismatch("BinarySecurityToken must have text content only");
    auto bytes = base64_decode(e.text);
    if (!bytes) throw Error(Errc::malformed_binary, "nonce token is not valid base64");
    if (bytes->size() < kMinRandomNonceLength) throw Error(Errc::malformed_binary, "nonce shorter than 8 octets");
    return make_nonce(RandomNonce{std::move(*bytes)});
  }
  if (e.name == "wsu:Timestamp") {
    if (!e.attributes.empty()) mismatch("unexpected attribute on wsu:Timestamp");
    expect_container(e, 1);
    if (e.children[0].name != "wsu:Created") mismatch("wsu:Timestamp expects wsu:Created");
    auto t = parse_utc(simple_text(e.children[0]));
    if (!t) throw Error(Errc::bad_timestamp, "'" + e.children[0].text + "' is not an ISO-8601 UTC instant");
    return make_nonce(Timestamp{*t});
  }
  mismatch("unknown token element '" + e.name + "'");
}

Term decode_token(std::string_view text, const CodecOptions& options) {
  return decode_token(xml::parse(text), options);
}

}  // namespace wsext
