#include "doctest.h"
#include "fixtures.hpp"
#include "wsext/error.hpp"
#include "wsext/crypto.hpp"

using namespace wsext;

namespace {

Bytes hex(const nlohmann::json& j) { return *from_hex(j.get<std::string>()); }

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::crypto_failure;
}

}  // namespace

TEST_SUITE("crypto") {
  TEST_CASE("AES-GCM known answers") {
    auto v = testgen::fixture_json("crypto_vectors.json");
    CryptoProvider c;
    for (const auto& t : v["aes_gcm"]) {
      Bytes key = hex(t["key"]), iv = hex(t["iv"]), pt = hex(t["plaintext"]), wire = hex(t["wire"]);
      CHECK(c.sk_encrypt_with_iv(key, iv, pt) == wire);
      CHECK(c.sk_decrypt(key, wire) == pt);
    }
    CryptoProvider strong(AlgorithmSuite::named("strong"));
    const auto& s = v["aes_256_gcm"];
    CHECK(strong.sk_encrypt_with_iv(hex(s["key"]), hex(s["iv"]), hex(s["plaintext"])) == hex(s["wire"]));
  }

  TEST_CASE("hash and HMAC known answers") {
    auto v = testgen::fixture_json("crypto_vectors.json");
    CryptoProvider c;
    for (const auto& t : v["sha256"]) CHECK(to_hex(c.hash(hex(t["data"]))) == to_hex(hex(t["digest"])));
    for (const auto& t : v["hmac_sha256"]) {
      CHECK(c.hmac(hex(t["key"]), hex(t["data"])) == hex(t["tag"]));
      CHECK(c.hmac_verify(hex(t["key"]), hex(t["data"]), hex(t["tag"])));
    }
    CryptoProvider strong(AlgorithmSuite::named("strong"));
    CHECK(strong.hash(to_bytes("abc")) == hex(v["sha512_abc"]));
  }

  TEST_CASE("finite-field groups match the closed-form primes") {
    auto v = testgen::fixture_json("crypto_vectors.json");
    CHECK(CryptoProvider().dh_prime() == hex(v["ffdhe2048_p"]));
    CHECK(CryptoProvider(AlgorithmSuite::named("strong")).dh_prime() == hex(v["ffdhe3072_p"]));
  }

  TEST_CASE("Diffie-Hellman known answers") {
    auto d = testgen::fixture_json("crypto_vectors.json")["dh"];
    CryptoProvider c;
    CHECK(c.dh_public_from_private(hex(d["x"])) == hex(d["gx"]));
    CHECK(c.dh_public_from_private(hex(d["y"])) == hex(d["gy"]));
    CHECK(c.dh_raw_shared(hex(d["x"]), hex(d["gy"])) == hex(d["z"]));
    CHECK(c.dh_shared(hex(d["x"]), hex(d["gy"])) == hex(d["key"]));
    CHECK(c.dh_shared(hex(d["y"]), hex(d["gx"])) == hex(d["key"]));
  }

  TEST_CASE("RSA vectors from an independent implementation") {
    auto r = testgen::fixture_json("crypto_vectors.json")["rsa"];
    CryptoProvider c;
    CHECK(c.pk_decrypt(hex(r["private_der"]), hex(r["oaep_wire"])) == hex(r["message"]));
    CHECK(c.verify(hex(r["public_der"]), hex(r["message"]), hex(r["pss_signature"])));
    Bytes bad = hex(r["pss_signature"]);
    bad[5] ^= 1;
    CHECK_FALSE(c.verify(hex(r["public_der"]), hex(r["message"]), bad));
  }

  TEST_CASE("inverse pairs") {
    CryptoProvider c;
    Bytes key = c.random_bytes(c.sk_key_length());
    KeyPair enc = c.pk_generate();
    KeyPair sig = c.sig_generate();
    for (std::size_t n : {0u, 1u, 16u, 190u, 191u, 1000u, 20000u}) {
      Bytes m = c.random_bytes(n);
      CHECK(c.sk_decrypt(key, c.sk_encrypt(key, m)) == m);
      CHECK(c.pk_decrypt(enc.private_part.view(), c.pk_encrypt(enc.public_part, m)) == m);
      CHECK(c.verify(sig.public_part, m, c.sign(sig.private_part.view(), m)));
      CHECK(c.hmac_verify(key, m, c.hmac(key, m)));
    }
    KeyPair a = c.dh_generate(), b = c.dh_generate();
    CHECK(c.dh_shared(a.private_part.view(), b.public_part) == c.dh_shared(b.private_part.view(), a.public_part));
    CHECK(c.dh_shared(a.private_part.view(), b.public_part).size() == c.sk_key_length());
  }

  TEST_CASE("raw OAEP limit and hybrid switch") {
    CryptoProvider c;
    CHECK(c.pk_raw_limit() == 190);
    KeyPair enc = c.pk_generate();
    CHECK(c.pk_encrypt(enc.public_part, Bytes(190))[0] == 0x00);
    CHECK(c.pk_encrypt(enc.public_part, Bytes(191))[0] == 0x01);
    CryptoProvider raw(AlgorithmSuite{}, false);
    CHECK(error_of([&] { raw.pk_encrypt(enc.public_part, Bytes(191)); }) == Errc::plaintext_too_long);
  }

  TEST_CASE("failures") {
    CryptoProvider c;
    Bytes key = c.random_bytes(16);
    Bytes ct = c.sk_encrypt(key, to_bytes("attack at dawn"));
    for (std::size_t i = 0; i < ct.size(); ++i) {
      Bytes t = ct;
      t[i] ^= 0x40;
      CHECK(error_of([&] { c.sk_decrypt(key, t); }) == Errc::auth_failure);
    }
    CHECK(error_of([&] { c.sk_encrypt(Bytes(5), Bytes(3)); }) == Errc::bad_key_length);
    KeyPair a = c.pk_generate(), b = c.pk_generate();
    CHECK(error_of([&] { c.pk_decrypt(b.private_part.view(), c.pk_encrypt(a.public_part, Bytes(10))); }) ==
          Errc::decrypt_failure);
    KeyPair d = c.dh_generate();
    Bytes p = c.dh_prime();
    Bytes one(p.size(), 0);
    one.back() = 1;
    Bytes pm1 = p;
    pm1.back() -= 1;
    CHECK(error_of([&] { c.dh_shared(d.private_part.view(), one); }) == Errc::invalid_peer_key);
    CHECK(error_of([&] { c.dh_shared(d.private_part.view(), pm1); }) == Errc::invalid_peer_key);
    CHECK(error_of([&] { c.dh_shared(d.private_part.view(), p); }) == Errc::invalid_peer_key);
    CHECK(error_of([] { CryptoProvider(AlgorithmSuite{"rot13"}); }) == Errc::unknown_algorithm);
    CHECK(error_of([] { AlgorithmSuite::named("weak"); }) == Errc::unknown_algorithm);
  }
}
