#include "doctest.h"
#include "generators.hpp"
#include "wsext/error.hpp"
#include "wsext/notation.hpp"
#include "wsext/term.hpp"

using namespace wsext;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::invalid_term;
}

SymbolTable sample_table() {
  return SymbolTable::parse(R"(
A   = name alice
B   = name bob
Na  = nonce 0011223344556677
Kab = key hex:DEADBEEF
M   = data text:hello
PKb = pubkey
)");
}

}  // namespace

TEST_SUITE("term") {
  TEST_CASE("leaf invariants") {
    CHECK(code_of([] { make_name(PlainName{""}); }) == Errc::invalid_term);
    CHECK(code_of([] { make_name(DistinguishedName{"o", "", "cn", "RO"}); }) == Errc::invalid_term);
    CHECK(code_of([] { make_nonce(RandomNonce{Bytes(7)}); }) == Errc::invalid_term);
    CHECK_NOTHROW(make_nonce(RandomNonce{Bytes(8)}));
    CHECK(code_of([] { make_key(KeyMaterial{}); }) == Errc::invalid_term);
    CHECK(code_of([] { make_data(UserData{{}, "text/plain", false}); }) == Errc::invalid_term);
    CHECK_NOTHROW(make_data(UserData{{}, "text/plain", true}));
  }

  TEST_CASE("key arguments by function") {
    Term m = make_data(UserData{to_bytes("x"), "text/plain", false});
    Term k = make_key(KeyMaterial{Bytes(16, 1), KeyEncoding::base64Binary, "Kab"});
    CHECK(code_of([&] { encrypt_term(m, FuncName::sk, std::nullopt); }) == Errc::missing_key_arg);
    CHECK(code_of([&] { encrypt_term(m, FuncName::hmac, std::nullopt); }) == Errc::missing_key_arg);
    CHECK(code_of([&] { encrypt_term(m, FuncName::h, k); }) == Errc::unexpected_key_arg);
    CHECK_NOTHROW(encrypt_term(m, FuncName::h, std::nullopt));
    CHECK(code_of([&] { encrypt_term(m, FuncName::sk, m); }) == Errc::invalid_term);
  }

  TEST_CASE("key labels do not take part in equality") {
    Term a = make_key(KeyMaterial{Bytes{1, 2, 3}, KeyEncoding::base64Binary, "Kab"});
    Term b = make_key(KeyMaterial{Bytes{1, 2, 3}, KeyEncoding::base64Binary, "Other"});
    Term c = make_key(KeyMaterial{Bytes{1, 2, 3}, KeyEncoding::hexBinary, "Kab"});
    CHECK(a == b);
    CHECK_FALSE(a == c);
  }

  TEST_CASE("pairs nest to the left and are not associative") {
    Term x = make_var("x", Sort::plain_name), y = make_var("y", Sort::plain_name), z = make_var("z", Sort::plain_name);
    Term left = sequence({x, y, z});
    CHECK(left == pair(pair(x, y), z));
    CHECK_FALSE(left == pair(x, pair(y, z)));
    CHECK(normalize_pairs(pair(x, pair(y, z))) == left);
    CHECK(flatten(pair(x, pair(y, z))).size() == 3);
    CHECK(term_size(left) == 5);
    CHECK(term_depth(left) == 3);
  }

  TEST_CASE("utc timestamps") {
    auto t = parse_utc("2009-04-15T10:00:00.000Z");
    REQUIRE(t);
    CHECK(format_utc(*t) == "2009-04-15T10:00:00.000Z");
    CHECK_FALSE(parse_utc("2009-04-15T10:00:00Z"));
    CHECK_FALSE(parse_utc("2009-13-15T10:00:00.000Z"));
  }
}

TEST_SUITE("notation") {
  TEST_CASE("parse and print concrete terms") {
    SymbolTable table = sample_table();
    Term t = parse_term("A, B, {Na, Kab}sk(Kab), {M}h", table);
    CHECK(print_term(t, &table) == "A,B,{Na,Kab}sk(Kab),{M}h");
    CHECK(flatten(t).size() == 4);
    CHECK(print_term(parse_term("A,(B,Na)", table), &table) == "A,(B,Na)");
  }

  TEST_CASE("errors") {
    SymbolTable table = sample_table();
    CHECK(code_of([&] { parse_term("A,", table); }) == Errc::syntax_error);
    CHECK(code_of([&] { parse_term("{A}sk", table); }) == Errc::missing_key_arg);
    CHECK(code_of([&] { parse_term("{A}h(Kab)", table); }) == Errc::unexpected_key_arg);
    CHECK(code_of([&] { parse_term("Zed", table); }) == Errc::unbound_identifier);
    CHECK(code_of([&] { parse_term("{A}xx(Kab)", table); }) == Errc::syntax_error);
  }

  TEST_CASE("symbol tables round-trip through text") {
    SymbolTable table = sample_table();
    SymbolTable again = SymbolTable::parse(table.to_text());
    CHECK(again.to_text() == table.to_text());
    REQUIRE(again.find("Kab"));
    CHECK(*again.find("Kab")->value == *table.find("Kab")->value);
  }

  TEST_CASE("parse/print identity on generated terms up to depth 6") {
    testgen::Gen g(0x6e6f74);
    testgen::NotationGen gen(g);
    for (int i = 0; i < 2000; ++i) {
      Term t = gen.term(g.uniform(1, 6));
      std::string printed = print_term(t);
      Term back = parse_term(printed, gen.table);
      INFO(printed);
      REQUIRE(back == t);
      REQUIRE(print_term(back) == printed);
    }
  }
}
