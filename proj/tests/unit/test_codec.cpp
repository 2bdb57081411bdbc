#include "doctest.h"
#include "fixtures.hpp"
#include "generators.hpp"
#include "wsext/error.hpp"
#include "wsext/token_codec.hpp"
#include "wsext/xsd_pattern.hpp"

using namespace wsext;

namespace {

Errc decode_error(std::string_view xml_text, const CodecOptions& o = {}) {
  try {
    decode_token(xml_text, o);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decoded without error: " << xml_text);
  return Errc::invalid_term;
}

}  // namespace

TEST_SUITE("codec") {
  TEST_CASE("patterns match the token schema byte for byte") {
    CHECK(validation_pattern(PatternKind::user_domain).pattern == R"((\w+\.|\w+)+)");
    CHECK(validation_pattern(PatternKind::ipv4).pattern == R"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})");
    CHECK(validation_pattern(PatternKind::ipv6).pattern == R"(([0-9a-fA-F]{1,4}:){7}[0-9a-fA-F]{1,4})");
    CHECK(validation_pattern(PatternKind::domain).pattern == R"((\w+\.\w+)+)");
  }

  TEST_CASE("pattern verdicts agree with the reference table") {
    std::istringstream lines(testgen::fixture_text("patterns.jsonl"));
    std::string line;
    std::map<std::string, int> per_kind;
    while (std::getline(lines, line)) {
      auto row = nlohmann::json::parse(line);
      auto kind = pattern_kind_from_string(row["kind"].get<std::string>());
      REQUIRE(kind);
      std::string value = row["value"];
      INFO(row.dump());
      CHECK(validate_name(*kind, value) == row["accept"].get<bool>());
      ++per_kind[row["kind"]];
    }
    CHECK(per_kind.size() == 4);
    for (const auto& [k, n] : per_kind) CHECK(n >= 20);
  }

  TEST_CASE("strict mode uses address and DNS rules") {
    CHECK_FALSE(validate_name(PatternKind::ipv4, "999.1.1.1", true));
    CHECK(validate_name(PatternKind::ipv4, "999.1.1.1", false));
    CHECK(validate_name(PatternKind::ipv6, "2001:db8::1", true));
    CHECK_FALSE(validate_name(PatternKind::ipv6, "2001:db8::1", false));
    CHECK(validate_name(PatternKind::domain, "host.example.org", true));
    CHECK_FALSE(validate_name(PatternKind::domain, "a.b.c", false));
  }

  TEST_CASE("documented examples") {
    Term ip = make_name(IpV4Name{"10.0.0.1"});
    CHECK(encode_token(ip).xml == "<UserIPNameToken><IPv4>10.0.0.1</IPv4></UserIPNameToken>");
    CHECK(decode_token(encode_token(ip).xml) == ip);
    try {
      encode_token(make_name(DomainName{"a"}));
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::pattern_violation);
    }
    Term k = make_key(KeyMaterial{Bytes{0xde, 0xad}, KeyEncoding::hexBinary, ""});
    CHECK(encode_token(k).xml == R"(<KeyToken type="hexBinary"><KeyValue>DEAD</KeyValue></KeyToken>)");
    CHECK(schema_of(k) == SchemaId::KeyToken);
  }

  TEST_CASE("malformed tokens") {
    CHECK(decode_error("<KeyToken type=\"hexBinary\"><KeyValue>XYZ</KeyValue></KeyToken>") == Errc::malformed_binary);
    CHECK(decode_error("<KeyToken type=\"octets\"><KeyValue>00</KeyValue></KeyToken>") == Errc::schema_mismatch);
    CHECK(decode_error("<wsu:Timestamp><wsu:Created>yesterday</wsu:Created></wsu:Timestamp>") == Errc::bad_timestamp);
    CHECK(decode_error("<DomainNameToken>nodot</DomainNameToken>") == Errc::pattern_violation);
    CHECK(decode_error("<Unknown/>") == Errc::schema_mismatch);
    CHECK(decode_error("<DistinguishedNameToken><Organization>o</Organization></DistinguishedNameToken>") ==
          Errc::schema_mismatch);
    CHECK(decode_error("<KeyToken") == Errc::malformed_xml);
  }

  TEST_CASE("encode/decode identity on 1000 generated leaves") {
    testgen::Gen g(0x746f6b);
    for (int i = 0; i < 1000; ++i) {
      Term t = g.token_leaf();
      TokenElement e = encode_token(t);
      INFO(e.xml);
      REQUIRE(e.schema_id == schema_of(t));
      Term back = decode_token(e.xml);
      REQUIRE(back == t);
      REQUIRE(encode_token(back).xml == e.xml);
    }
  }

  TEST_CASE("xsd engine basics") {
    XsdPattern p = XsdPattern::compile(R"(a{2,3}b?)");
    CHECK(p.matches("aa"));
    CHECK(p.matches("aaab"));
    CHECK_FALSE(p.matches("a"));
    CHECK_FALSE(p.matches("aaaa"));
    CHECK_THROWS_AS(XsdPattern::compile("(ab"), Error);
    CHECK(XsdPattern::compile(R"([a-z-[aeiou]]+)").matches("xyz"));
    CHECK_FALSE(XsdPattern::compile(R"([a-z-[aeiou]]+)").matches("xaz"));
    CHECK(XsdPattern::compile(R"(\p{Lu}\d)").matches("Ω٣"));
    CHECK(is_xsd_word_char(U'a'));
    CHECK_FALSE(is_xsd_word_char(U'_'));
    CHECK(is_xsd_digit(U'٣'));
  }
}
