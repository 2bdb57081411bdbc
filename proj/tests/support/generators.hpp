#pragma once

#include <random>
#include <string>
#include <vector>

#include "wsext/crypto.hpp"
#include "wsext/envelope.hpp"
#include "wsext/notation.hpp"
#include "wsext/term.hpp"

namespace wsext::testgen {

/// Seeded generator of valid leaves and of envelope-encodable terms.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return uniform(0, 1) == 1; }

  Bytes bytes(std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(uniform(0, 255));
    return b;
  }

  std::string word(int min_len = 1, int max_len = 8) {
    static const std::string kAlpha = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    std::string s;
    int n = uniform(min_len, max_len);
    for (int i = 0; i < n; ++i) s += kAlpha[static_cast<std::size_t>(uniform(0, static_cast<int>(kAlpha.size()) - 1))];
    return s;
  }

  /// Free text with XML-special and non-ASCII characters.
  std::string text() {
    static const std::vector<std::string> kPieces{"a", "Z", " ", "<", ">", "&", "\"", "'", "é", "Ω", "名", "-", "9"};
    std::string s = word(1, 3);
    int n = uniform(0, 6);
    for (int i = 0; i < n; ++i) s += kPieces[static_cast<std::size_t>(uniform(0, static_cast<int>(kPieces.size()) - 1))];
    return s;
  }

  Term name() {
    switch (uniform(0, 5)) {
      case 0: return make_name(DistinguishedName{text(), text(), text(), word(2, 2)});
      case 1: {
        std::string domain = word();
        for (int i = uniform(0, 3); i > 0; --i) domain += "." + word();
        return make_name(UserDomainName{text(), domain});
      }
      case 2:
        return make_name(IpV4Name{std::to_string(uniform(0, 255)) + "." + std::to_string(uniform(0, 255)) + "." +
                                  std::to_string(uniform(0, 255)) + "." + std::to_string(uniform(0, 255))});
      case 3: {
        std::string a;
        static const char* kHex = "0123456789abcdefABCDEF";
        for (int g = 0; g < 8; ++g) {
          if (g) a += ':';
          for (int i = uniform(1, 4); i > 0; --i) a += kHex[uniform(0, 21)];
        }
        return make_name(IpV6Name{a});
      }
      case 4: {
        std::string d = word() + "." + word();
        for (int i = uniform(0, 2); i > 0; --i) d += word() + "." + word();
        return make_name(DomainName{d});
      }
      default: return make_name(PlainName{text()});
    }
  }

  Term nonce() {
    if (coin()) return make_nonce(RandomNonce{bytes(static_cast<std::size_t>(uniform(8, 40)))});
    std::int64_t ms = std::uniform_int_distribution<std::int64_t>(0, 4'102'444'800'000)(rng_);
    return make_nonce(Timestamp{UtcMillis(std::chrono::milliseconds(ms))});
  }

  Term key() {
    return make_key(KeyMaterial{bytes(static_cast<std::size_t>(uniform(1, 64))),
                                coin() ? KeyEncoding::base64Binary : KeyEncoding::hexBinary, ""});
  }

  Term data() {
    switch (uniform(0, 2)) {
      case 0: return make_data(UserData{{}, "text/plain", true});
      case 1: return make_data(UserData{to_bytes(text()), "text/plain", false});
      default: return make_data(UserData{bytes(static_cast<std::size_t>(uniform(1, 300))), "application/octet-stream", false});
    }
  }

  /// Any leaf that encodes as a security token.
  Term token_leaf() {
    switch (uniform(0, 2)) {
      case 0: return name();
      case 1: return nonce();
      default: return key();
    }
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Fixed keys for envelope generation: Kab (symmetric), PKb (encryption
/// pair), SKa (signature pair).
struct EnvelopeKeys {
  explicit EnvelopeKeys(const CryptoProvider& crypto)
      : enc(crypto.pk_generate()),
        sig(crypto.sig_generate()),
        kab(make_key(KeyMaterial{crypto.random_bytes(crypto.sk_key_length()), KeyEncoding::base64Binary, "Kab"})),
        pkb(make_key(KeyMaterial{enc.public_part, KeyEncoding::base64Binary, "PKb"})),
        ska(make_key(KeyMaterial{sig.public_part, KeyEncoding::base64Binary, "SKa"})) {
    ring.add({"Kab", KeyUse::symmetric, kab, {}, std::nullopt});
    ring.add({"PKb", KeyUse::public_encrypt, pkb, enc.private_part, std::nullopt});
    ring.add({"SKa", KeyUse::signing, ska, sig.private_part, std::nullopt});
  }

  KeyPair enc, sig;
  Term kab, pkb, ska;
  KeyRing ring;
};

/// Random envelope-encodable terms of bounded depth. Digest preimages are
/// recorded in `known` so a receiver can resolve them.
class EnvelopeGen {
 public:
  EnvelopeGen(Gen& g, const EnvelopeKeys& keys) : g_(g), keys_(keys) {}

  Term message(int max_depth) {
    known.clear();
    std::vector<Term> items;
    for (int i = g_.uniform(1, 4); i > 0; --i) items.push_back(item(max_depth - 1, g_.coin()));
    return sequence(items);
  }

  std::vector<Term> known;

 private:
  Term item(int depth, bool body) {
    if (depth <= 0 || g_.uniform(0, 2) == 0) return body ? g_.data() : g_.token_leaf();
    if (!body && g_.uniform(0, 3) == 0) {
      std::vector<Term> leaves;
      for (int i = g_.uniform(1, 3); i > 0; --i) {
        leaves.push_back(g_.coin() ? g_.token_leaf() : g_.data());
        known.push_back(leaves.back());
      }
      if (g_.coin()) return encrypt_term(sequence(leaves), FuncName::h, std::nullopt);
      return encrypt_term(sequence(leaves), FuncName::hmac, keys_.kab);
    }
    std::vector<Term> payload;
    for (int i = g_.uniform(1, 3); i > 0; --i) payload.push_back(item(depth - 1, body));
    switch (g_.uniform(0, 2)) {
      case 0: return encrypt_term(sequence(payload), FuncName::sk, keys_.kab);
      case 1: return encrypt_term(sequence(payload), FuncName::pk, keys_.pkb);
      default: return encrypt_term(sequence(payload), FuncName::pk, keys_.ska);
    }
  }

  Gen& g_;
  const EnvelopeKeys& keys_;
};

/// Random notation-level term over placeholders.
class NotationGen {
 public:
  explicit NotationGen(Gen& g) : g_(g) {
    const std::vector<std::pair<std::string, Sort>> ids{
        {"A", Sort::plain_name}, {"B", Sort::user_domain_name}, {"S", Sort::distinguished_name},
        {"Na", Sort::random_nonce}, {"Nb", Sort::random_nonce}, {"T1", Sort::timestamp},
        {"Kab", Sort::key}, {"Kbs", Sort::key}, {"PKb", Sort::public_key}, {"SKa", Sort::signing_key},
        {"Gx", Sort::dh_key}, {"M", Sort::user_data}};
    for (const auto& [id, sort] : ids) table.bind(id, sort);
    for (const auto& [id, sort] : ids) {
      leaves.push_back(make_var(id, sort));
      if (sort == Sort::key) sym_keys.push_back(leaves.back());
      if (sort == Sort::public_key || sort == Sort::signing_key) pk_keys.push_back(leaves.back());
    }
  }

  Term term(int depth) {
    if (depth <= 1 || g_.uniform(0, 3) == 0) return pick(leaves);
    if (g_.coin()) return pair(term(depth - 1), term(depth - 1));
    Term payload = term(depth - 1);
    switch (g_.uniform(0, 3)) {
      case 0: return encrypt_term(payload, FuncName::sk, pick(sym_keys));
      case 1: return encrypt_term(payload, FuncName::pk, pick(pk_keys));
      case 2: return encrypt_term(payload, FuncName::h, std::nullopt);
      default: return encrypt_term(payload, FuncName::hmac, pick(sym_keys));
    }
  }

  SymbolTable table;

 private:
  Term pick(const std::vector<Term>& v) { return v[static_cast<std::size_t>(g_.uniform(0, static_cast<int>(v.size()) - 1))]; }

  Gen& g_;
  std::vector<Term> leaves, sym_keys, pk_keys;
};

}  // namespace wsext::testgen
