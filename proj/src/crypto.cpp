#include "wsext/crypto.hpp"

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/crypto.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/kdf.h>
#include <openssl/params.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

#include <memory>

#include "wsext/error.hpp"

namespace wsext {

namespace {

template <auto Fn>
struct Free {
  template <class T>
  void operator()(T* p) const {
    Fn(p);
  }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, Free<EVP_PKEY_free>>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, Free<EVP_PKEY_CTX_free>>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, Free<EVP_CIPHER_CTX_free>>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, Free<EVP_MD_CTX_free>>;
using BnPtr = std::unique_ptr<BIGNUM, Free<BN_clear_free>>;
using BnCtxPtr = std::unique_ptr<BN_CTX, Free<BN_CTX_free>>;
using KdfPtr = std::unique_ptr<EVP_KDF, Free<EVP_KDF_free>>;
using KdfCtxPtr = std::unique_ptr<EVP_KDF_CTX, Free<EVP_KDF_CTX_free>>;

constexpr std::size_t kGcmIvLength = 12;
constexpr std::size_t kGcmTagLength = 16;

[[noreturn]] void openssl_fail(const char* what) {
  unsigned long e = ERR_get_error();
  char buf[256] = {0};
  if (e) ERR_error_string_n(e, buf, sizeof buf);
  ERR_clear_error();
  throw Error(Errc::crypto_failure, std::string(what) + (e ? std::string(": ") + buf : std::string()));
}

void ok(int rc, const char* what) {
  if (rc <= 0) openssl_fail(what);
}

struct SkInfo {
  std::string_view id;
  const EVP_CIPHER* (*cipher)();
  std::size_t key_length;
};
constexpr SkInfo kSk[] = {{"aes-128-gcm", EVP_aes_128_gcm, 16}, {"aes-256-gcm", EVP_aes_256_gcm, 32}};

struct RsaInfo {
  std::string_view id;
  int bits;
};
constexpr RsaInfo kPk[] = {{"rsa-2048-oaep-sha256", 2048}, {"rsa-3072-oaep-sha256", 3072}};
constexpr RsaInfo kSig[] = {{"rsa-2048-pss-sha256", 2048}, {"rsa-3072-pss-sha256", 3072}};

struct HashInfo {
  std::string_view id;
  const EVP_MD* (*md)();
};
constexpr HashInfo kHash[] = {{"sha-256", EVP_sha256}, {"sha-512", EVP_sha512}};
constexpr HashInfo kHmac[] = {{"hmac-sha-256", EVP_sha256}, {"hmac-sha-512", EVP_sha512}};

constexpr std::string_view kDhGroups[] = {"ffdhe2048", "ffdhe3072"};

template <class T, std::size_t N>
const T* lookup(const T (&table)[N], std::string_view id) {
  for (const auto& t : table)
    if (t.id == id) return &t;
  return nullptr;
}

Bytes load_prime(std::string_view group) {
  std::string name(group);
  OSSL_PARAM params[] = {OSSL_PARAM_construct_utf8_string(OSSL_PKEY_PARAM_GROUP_NAME, name.data(), 0),
                         OSSL_PARAM_construct_end()};
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_from_name(nullptr, "DH", nullptr));
  if (!ctx) openssl_fail("DH context");
  ok(EVP_PKEY_fromdata_init(ctx.get()), "DH fromdata init");
  EVP_PKEY* raw = nullptr;
  ok(EVP_PKEY_fromdata(ctx.get(), &raw, EVP_PKEY_KEY_PARAMETERS, params), "DH group parameters");
  PkeyPtr pkey(raw);
  BIGNUM* p = nullptr;
  ok(EVP_PKEY_get_bn_param(pkey.get(), OSSL_PKEY_PARAM_FFC_P, &p), "DH prime");
  BnPtr prime(p);
  Bytes out(static_cast<std::size_t>(BN_num_bytes(prime.get())));
  BN_bn2bin(prime.get(), out.data());
  return out;
}

const Bytes& group_prime(std::string_view group) {
  static const Bytes k2048 = load_prime("ffdhe2048");
  static const Bytes k3072 = load_prime("ffdhe3072");
  return group == "ffdhe3072" ? k3072 : k2048;
}

BnPtr to_bn(ByteView b) {
  BnPtr n(BN_bin2bn(b.data(), static_cast<int>(b.size()), nullptr));
  if (!n) openssl_fail("bignum");
  return n;
}

Bytes from_bn(const BIGNUM* n, std::size_t width) {
  Bytes out(width);
  if (BN_bn2binpad(n, out.data(), static_cast<int>(width)) < 0) openssl_fail("bignum encode");
  return out;
}

PkeyPtr rsa_generate(int bits) {
  PkeyPtr p(EVP_RSA_gen(static_cast<unsigned>(bits)));
  if (!p) openssl_fail("RSA key generation");
  return p;
}

KeyPair export_pair(EVP_PKEY* pkey, std::string algorithm) {
  KeyPair kp;
  kp.algorithm = std::move(algorithm);
  unsigned char* buf = nullptr;
  int n = i2d_PUBKEY(pkey, &buf);
  if (n <= 0) openssl_fail("public key export");
  kp.public_part.assign(buf, buf + n);
  OPENSSL_free(buf);
  buf = nullptr;
  n = i2d_PrivateKey(pkey, &buf);
  if (n <= 0) openssl_fail("private key export");
  kp.private_part = SecretBytes(Bytes(buf, buf + n));
  OPENSSL_clear_free(buf, static_cast<std::size_t>(n));
  return kp;
}

PkeyPtr load_public(ByteView der, Errc on_error) {
  const unsigned char* p = der.data();
  PkeyPtr k(d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size())));
  if (!k || EVP_PKEY_get_base_id(k.get()) != EVP_PKEY_RSA) {
    ERR_clear_error();
    throw Error(on_error, "not an RSA public key");
  }
  return k;
}

PkeyPtr load_private(ByteView der, Errc on_error) {
  const unsigned char* p = der.data();
  PkeyPtr k(d2i_AutoPrivateKey(nullptr, &p, static_cast<long>(der.size())));
  if (!k || EVP_PKEY_get_base_id(k.get()) != EVP_PKEY_RSA) {
    ERR_clear_error();
    throw Error(on_error, "not an RSA private key");
  }
  return k;
}

void set_oaep(EVP_PKEY_CTX* ctx) {
  ok(EVP_PKEY_CTX_set_rsa_padding(ctx, RSA_PKCS1_OAEP_PADDING), "OAEP padding");
  ok(EVP_PKEY_CTX_set_rsa_oaep_md(ctx, EVP_sha256()), "OAEP digest");
  ok(EVP_PKEY_CTX_set_rsa_mgf1_md(ctx, EVP_sha256()), "OAEP MGF1 digest");
}

Bytes oaep_encrypt(EVP_PKEY* key, ByteView plaintext) {
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key, nullptr));
  if (!ctx) openssl_fail("pk context");
  ok(EVP_PKEY_encrypt_init(ctx.get()), "pk encrypt init");
  set_oaep(ctx.get());
  std::size_t len = 0;
  ok(EVP_PKEY_encrypt(ctx.get(), nullptr, &len, plaintext.data(), plaintext.size()), "pk encrypt size");
  Bytes out(len);
  ok(EVP_PKEY_encrypt(ctx.get(), out.data(), &len, plaintext.data(), plaintext.size()), "pk encrypt");
  out.resize(len);
  return out;
}

Bytes oaep_decrypt(EVP_PKEY* key, ByteView ciphertext) {
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key, nullptr));
  if (!ctx) openssl_fail("pk context");
  ok(EVP_PKEY_decrypt_init(ctx.get()), "pk decrypt init");
  set_oaep(ctx.get());
  std::size_t len = 0;
  if (EVP_PKEY_decrypt(ctx.get(), nullptr, &len, ciphertext.data(), ciphertext.size()) <= 0) {
    ERR_clear_error();
    throw Error(Errc::decrypt_failure, "RSA-OAEP ciphertext rejected");
  }
  Bytes out(len);
  if (EVP_PKEY_decrypt(ctx.get(), out.data(), &len, ciphertext.data(), ciphertext.size()) <= 0) {
    ERR_clear_error();
    throw Error(Errc::decrypt_failure, "RSA-OAEP ciphertext rejected");
  }
  out.resize(len);
  return out;
}

}  // namespace

AlgorithmSuite AlgorithmSuite::named(std::string_view name) {
  if (name == "default") return AlgorithmSuite{};
  if (name == "strong")
    return AlgorithmSuite{"aes-256-gcm",  "rsa-3072-oaep-sha256", "sha-512",
                          "hmac-sha-512", "rsa-3072-pss-sha256",  "ffdhe3072"};
  throw Error(Errc::unknown_algorithm, "no algorithm suite named '" + std::string(name) + "'");
}

const std::vector<std::string>& registered_algorithms() {
  static const std::vector<std::string> kAll = [] {
    std::vector<std::string> v;
    for (const auto& x : kSk) v.emplace_back(x.id);
    for (const auto& x : kPk) v.emplace_back(x.id);
    for (const auto& x : kSig) v.emplace_back(x.id);
    for (const auto& x : kHash) v.emplace_back(x.id);
    for (const auto& x : kHmac) v.emplace_back(x.id);
    for (auto g : kDhGroups) v.emplace_back(g);
    return v;
  }();
  return kAll;
}

CryptoProvider::CryptoProvider(AlgorithmSuite suite, bool hybrid_pk) : suite_(std::move(suite)), hybrid_pk_(hybrid_pk) {
  auto need = [](bool found, const std::string& id) {
    if (!found) throw Error(Errc::unknown_algorithm, "'" + id + "' is not in the registry");
  };
  need(lookup(kSk, suite_.sk_algorithm), suite_.sk_algorithm);
  need(lookup(kPk, suite_.pk_algorithm), suite_.pk_algorithm);
  need(lookup(kSig, suite_.signature_algorithm), suite_.signature_algorithm);
  need(lookup(kHash, suite_.hash_algorithm), suite_.hash_algorithm);
  need(lookup(kHmac, suite_.hmac_algorithm), suite_.hmac_algorithm);
  bool dh = false;
  for (auto g : kDhGroups) dh = dh || g == suite_.dh_group;
  need(dh, suite_.dh_group);
}

Bytes CryptoProvider::random_bytes(std::size_t n) const {
  Bytes out(n);
  if (n > 0) ok(RAND_bytes(out.data(), static_cast<int>(n)), "random bytes");
  return out;
}

std::size_t CryptoProvider::sk_key_length() const noexcept { return lookup(kSk, suite_.sk_algorithm)->key_length; }

Bytes CryptoProvider::sk_encrypt(ByteView key, ByteView plaintext) const {
  Bytes iv = random_bytes(kGcmIvLength);
  return sk_encrypt_with_iv(key, iv, plaintext);
}

Bytes CryptoProvider::sk_encrypt_with_iv(ByteView key, ByteView iv, ByteView plaintext, ByteView aad) const {
  const SkInfo& info = *lookup(kSk, suite_.sk_algorithm);
  if (key.size() != info.key_length)
    throw Error(Errc::bad_key_length, std::to_string(key.size()) + " octets, " + std::string(info.id) + " needs " +
                                          std::to_string(info.key_length));
  if (iv.size() != kGcmIvLength) throw Error(Errc::crypto_failure, "GCM IV must be 12 octets");
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_fail("cipher context");
  ok(EVP_EncryptInit_ex(ctx.get(), info.cipher(), nullptr, key.data(), iv.data()), "sk encrypt init");
  int len = 0;
  if (!aad.empty())
    ok(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())), "sk aad");
  Bytes out(iv.begin(), iv.end());
  out.resize(kGcmIvLength + plaintext.size() + kGcmTagLength);
  unsigned char* body = out.data() + kGcmIvLength;
  if (!plaintext.empty())
    ok(EVP_EncryptUpdate(ctx.get(), body, &len, plaintext.data(), static_cast<int>(plaintext.size())), "sk encrypt");
  int fin = 0;
  ok(EVP_EncryptFinal_ex(ctx.get(), body + plaintext.size(), &fin), "sk encrypt final");
  ok(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(kGcmTagLength),
                         body + plaintext.size()),
     "sk tag");
  return out;
}

Bytes CryptoProvider::sk_decrypt(ByteView key, ByteView ciphertext) const {
  const SkInfo& info = *lookup(kSk, suite_.sk_algorithm);
  if (key.size() != info.key_length)
    throw Error(Errc::bad_key_length, std::to_string(key.size()) + " octets, " + std::string(info.id) + " needs " +
                                          std::to_string(info.key_length));
  if (ciphertext.size() < kGcmIvLength + kGcmTagLength) throw Error(Errc::auth_failure, "ciphertext too short");
  std::size_t body_len = ciphertext.size() - kGcmIvLength - kGcmTagLength;
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_fail("cipher context");
  ok(EVP_DecryptInit_ex(ctx.get(), info.cipher(), nullptr, key.data(), ciphertext.data()), "sk decrypt init");
  Bytes out(body_len);
  int len = 0;
  if (body_len > 0)
    ok(EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data() + kGcmIvLength, static_cast<int>(body_len)),
       "sk decrypt");
  Bytes tag(ciphertext.end() - kGcmTagLength, ciphertext.end());
  ok(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(kGcmTagLength), tag.data()), "sk tag");
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + body_len, &fin) <= 0) {
    ERR_clear_error();
    OPENSSL_cleanse(out.data(), out.size());
    throw Error(Errc::auth_failure, "authentication tag mismatch");
  }
  return out;
}

KeyPair CryptoProvider::pk_generate() const {
  const RsaInfo& info = *lookup(kPk, suite_.pk_algorithm);
  PkeyPtr k = rsa_generate(info.bits);
  return export_pair(k.get(), std::string(info.id));
}

std::size_t CryptoProvider::pk_raw_limit() const noexcept {
  const RsaInfo& info = *lookup(kPk, suite_.pk_algorithm);
  return static_cast<std::size_t>(info.bits / 8) - 2 * 32 - 2;
}

Bytes CryptoProvider::pk_encrypt(ByteView public_part, ByteView plaintext) const {
  PkeyPtr key = load_public(public_part, Errc::unresolved_key);
  Bytes out;
  if (plaintext.size() <= pk_raw_limit()) {
    out.push_back(0x00);
    Bytes c = oaep_encrypt(key.get(), plaintext);
    out.insert(out.end(), c.begin(), c.end());
    return out;
  }
  if (!hybrid_pk_)
    throw Error(Errc::plaintext_too_long, std::to_string(plaintext.size()) + " octets exceed the OAEP limit of " +
                                              std::to_string(pk_raw_limit()));
  SecretBytes session(random_bytes(sk_key_length()));
  Bytes wrapped = oaep_encrypt(key.get(), session.view());
  Bytes body = sk_encrypt(session.view(), plaintext);
  out.reserve(1 + wrapped.size() + body.size());
  out.push_back(0x01);
  out.insert(out.end(), wrapped.begin(), wrapped.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Bytes CryptoProvider::pk_decrypt(ByteView private_part, ByteView ciphertext) const {
  PkeyPtr key = load_private(private_part, Errc::decrypt_failure);
  if (ciphertext.empty()) throw Error(Errc::decrypt_failure, "empty ciphertext");
  auto modulus = static_cast<std::size_t>(EVP_PKEY_get_size(key.get()));
  if (ciphertext[0] == 0x00) {
    if (ciphertext.size() != 1 + modulus) throw Error(Errc::decrypt_failure, "ciphertext length mismatch");
    return oaep_decrypt(key.get(), ciphertext.subspan(1));
  }
  if (ciphertext[0] == 0x01 && ciphertext.size() > 1 + modulus) {
    SecretBytes session(oaep_decrypt(key.get(), ciphertext.subspan(1, modulus)));
    try {
      return sk_decrypt(session.view(), ciphertext.subspan(1 + modulus));
    } catch (const Error& e) {
      throw Error(Errc::decrypt_failure, e.detail());
    }
  }
  throw Error(Errc::decrypt_failure, "unknown pk ciphertext format");
}

Bytes CryptoProvider::hash(ByteView data) const {
  const EVP_MD* md = lookup(kHash, suite_.hash_algorithm)->md();
  Bytes out(static_cast<std::size_t>(EVP_MD_get_size(md)));
  unsigned int len = 0;
  ok(EVP_Digest(data.data(), data.size(), out.data(), &len, md, nullptr), "digest");
  out.resize(len);
  return out;
}

Bytes CryptoProvider::hmac(ByteView key, ByteView data) const {
  const EVP_MD* md = lookup(kHmac, suite_.hmac_algorithm)->md();
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  static const unsigned char kEmpty = 0;
  if (!HMAC(md, key.empty() ? &kEmpty : key.data(), static_cast<int>(key.size()), data.data(), data.size(),
            out.data(), &len))
    openssl_fail("hmac");
  out.resize(len);
  return out;
}

bool CryptoProvider::hmac_verify(ByteView key, ByteView data, ByteView tag) const {
  Bytes expected = hmac(key, data);
  return expected.size() == tag.size() && CRYPTO_memcmp(expected.data(), tag.data(), tag.size()) == 0;
}

KeyPair CryptoProvider::sig_generate() const {
  const RsaInfo& info = *lookup(kSig, suite_.signature_algorithm);
  PkeyPtr k = rsa_generate(info.bits);
  return export_pair(k.get(), std::string(info.id));
}

Bytes CryptoProvider::sign(ByteView private_part, ByteView data) const {
  PkeyPtr key = load_private(private_part, Errc::unresolved_key);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  EVP_PKEY_CTX* pctx = nullptr;
  ok(EVP_DigestSignInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.get()), "sign init");
  ok(EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING), "PSS padding");
  ok(EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST), "PSS salt");
  std::size_t len = 0;
  ok(EVP_DigestSign(ctx.get(), nullptr, &len, data.data(), data.size()), "sign size");
  Bytes sig(len);
  ok(EVP_DigestSign(ctx.get(), sig.data(), &len, data.data(), data.size()), "sign");
  sig.resize(len);
  return sig;
}

bool CryptoProvider::verify(ByteView public_part, ByteView data, ByteView signature) const {
  PkeyPtr key;
  try {
    key = load_public(public_part, Errc::unresolved_key);
  } catch (const Error&) {
    return false;
  }
  MdCtxPtr ctx(EVP_MD_CTX_new());
  EVP_PKEY_CTX* pctx = nullptr;
  ok(EVP_DigestVerifyInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.get()), "verify init");
  ok(EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING), "PSS padding");
  ok(EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST), "PSS salt");
  int rc = EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), data.data(), data.size());
  ERR_clear_error();
  return rc == 1;
}

Bytes CryptoProvider::dh_prime() const { return group_prime(suite_.dh_group); }

KeyPair CryptoProvider::dh_generate() const {
  const Bytes& prime = group_prime(suite_.dh_group);
  BnPtr p = to_bn(prime);
  // x uniform in [2, q-1], q = (p-1)/2
  BnPtr q(BN_dup(p.get()));
  BnPtr range(BN_new());
  BnPtr x(BN_secure_new());
  if (!q || !range || !x) openssl_fail("bignum");
  ok(BN_sub_word(q.get(), 1), "bn");
  ok(BN_rshift1(q.get(), q.get()), "bn");
  ok(BN_copy(range.get(), q.get()) != nullptr, "bn");
  ok(BN_sub_word(range.get(), 2), "bn");
  ok(BN_priv_rand_range(x.get(), range.get()), "dh private");
  ok(BN_add_word(x.get(), 2), "bn");
  KeyPair kp;
  kp.algorithm = suite_.dh_group;
  kp.private_part = SecretBytes(from_bn(x.get(), prime.size()));
  kp.public_part = dh_public_from_private(kp.private_part.view());
  return kp;
}

Bytes CryptoProvider::dh_public_from_private(ByteView private_part) const {
  const Bytes& prime = group_prime(suite_.dh_group);
  BnPtr p = to_bn(prime);
  BnPtr x = to_bn(private_part);
  BnPtr g(BN_new());
  BnPtr y(BN_new());
  BnCtxPtr ctx(BN_CTX_new());
  if (!g || !y || !ctx) openssl_fail("bignum");
  ok(BN_set_word(g.get(), 2), "bn");
  ok(BN_mod_exp_mont_consttime(y.get(), g.get(), x.get(), p.get(), ctx.get(), nullptr), "dh public");
  return from_bn(y.get(), prime.size());
}

Bytes CryptoProvider::dh_raw_shared(ByteView private_part, ByteView peer_public) const {
  const Bytes& prime = group_prime(suite_.dh_group);
  BnPtr p = to_bn(prime);
  BnPtr peer = to_bn(peer_public);
  BnPtr upper(BN_dup(p.get()));
  BnCtxPtr ctx(BN_CTX_new());
  if (!upper || !ctx) openssl_fail("bignum");
  ok(BN_sub_word(upper.get(), 1), "bn");
  // Reject 0, 1, p-1 and anything >= p.
  if (BN_cmp(peer.get(), BN_value_one()) <= 0 || BN_cmp(peer.get(), upper.get()) >= 0)
    throw Error(Errc::invalid_peer_key, "peer public value is degenerate");
  BnPtr q(BN_dup(upper.get()));
  BnPtr check(BN_new());
  if (!q || !check) openssl_fail("bignum");
  ok(BN_rshift1(q.get(), q.get()), "bn");
  ok(BN_mod_exp(check.get(), peer.get(), q.get(), p.get(), ctx.get()), "dh subgroup check");
  if (!BN_is_one(check.get())) throw Error(Errc::invalid_peer_key, "peer public value is outside the prime-order subgroup");
  BnPtr x = to_bn(private_part);
  BnPtr z(BN_secure_new());
  if (!z) openssl_fail("bignum");
  ok(BN_mod_exp_mont_consttime(z.get(), peer.get(), x.get(), p.get(), ctx.get(), nullptr), "dh shared");
  return from_bn(z.get(), prime.size());
}

Bytes CryptoProvider::derive_key(ByteView shared_secret) const {
  KdfPtr kdf(EVP_KDF_fetch(nullptr, "HKDF", nullptr));
  if (!kdf) openssl_fail("HKDF");
  KdfCtxPtr kctx(EVP_KDF_CTX_new(kdf.get()));
  if (!kctx) openssl_fail("HKDF context");
  static const char kInfo[] = "wsext-dh-key";
  char digest[] = "SHA256";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(OSSL_KDF_PARAM_DIGEST, digest, 0),
      OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_KEY, const_cast<std::uint8_t*>(shared_secret.data()),
                                        shared_secret.size()),
      OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_INFO, const_cast<char*>(kInfo), sizeof kInfo - 1),
      OSSL_PARAM_construct_end(),
  };
  Bytes out(sk_key_length());
  ok(EVP_KDF_derive(kctx.get(), out.data(), out.size(), params), "HKDF derive");
  return out;
}

Bytes CryptoProvider::dh_shared(ByteView private_part, ByteView peer_public) const {
  SecretBytes z(dh_raw_shared(private_part, peer_public));
  return derive_key(z.view());
}

}  // namespace wsext
