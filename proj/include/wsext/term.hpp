#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wsext/bytes.hpp"

namespace wsext {

// ---- Participant names (P and its disjoint subsets) ----

struct DistinguishedName {
  std::string organization;
  std::string organizational_unit;
  std::string common_name;
  std::string country;
  bool operator==(const DistinguishedName&) const = default;
};

/// user@host.domain or user.host.domain, split into its two schema fields.
struct UserDomainName {
  std::string user;
  std::string domain;
  bool operator==(const UserDomainName&) const = default;
};

struct IpV4Name {
  std::string address;
  bool operator==(const IpV4Name&) const = default;
};

struct IpV6Name {
  std::string address;
  bool operator==(const IpV6Name&) const = default;
};

struct DomainName {
  std::string domain;
  bool operator==(const DomainName&) const = default;
};

/// Any remaining user name type; carried by wsse:UsernameToken.
struct PlainName {
  std::string name;
  bool operator==(const PlainName&) const = default;
};

using NameKind = std::variant<DistinguishedName, UserDomainName, IpV4Name, IpV6Name, DomainName, PlainName>;

// ---- Nonces (N) ----

inline constexpr std::size_t kMinRandomNonceLength = 8;

struct RandomNonce {
  Bytes bytes;
  bool operator==(const RandomNonce&) const = default;
};

using UtcMillis = std::chrono::sys_time<std::chrono::milliseconds>;

struct Timestamp {
  UtcMillis instant;
  bool operator==(const Timestamp&) const = default;
};

using Nonce = std::variant<RandomNonce, Timestamp>;

// ---- Keys (K) and user data (M) ----

enum class KeyEncoding { base64Binary, hexBinary };

/// `label` is the protocol-local identifier ("Kab"). It travels as a key
/// reference, never inside a KeyToken, so equality ignores it.
struct KeyMaterial {
  Bytes bytes;
  KeyEncoding encoding = KeyEncoding::base64Binary;
  std::string label;
};

struct UserData {
  Bytes content;
  std::string media_label;
  bool empty_payload = false;
  bool operator==(const UserData&) const = default;
};

enum class FuncName { sk, pk, h, hmac };

std::string_view to_string(FuncName f) noexcept;
std::optional<FuncName> func_from_string(std::string_view s) noexcept;
inline bool takes_key(FuncName f) noexcept { return f != FuncName::h; }

/// Basic-set membership of an identifier in templates and symbol tables.
enum class Sort {
  plain_name,
  distinguished_name,
  user_domain_name,
  ipv4_name,
  ipv6_name,
  domain_name,
  random_nonce,
  timestamp,
  key,
  public_key,   // asymmetric encryption pair; the term carries the public half
  signing_key,  // signature pair; pk(...) with this key signs
  dh_key,       // Diffie-Hellman public value
  user_data,
};

std::string_view to_string(Sort s) noexcept;
std::optional<Sort> sort_from_string(std::string_view s) noexcept;
bool is_name_sort(Sort s) noexcept;
bool is_key_sort(Sort s) noexcept;
bool is_nonce_sort(Sort s) noexcept;

// ---- Terms ----

struct TermNode;

/// Immutable message term. Copies share structure.
class Term {
 public:
  explicit Term(std::shared_ptr<const TermNode> node) : node_(std::move(node)) {}

  const TermNode& node() const noexcept { return *node_; }
  template <class T>
  const T* as() const noexcept;
  template <class T>
  bool is() const noexcept {
    return as<T>() != nullptr;
  }

 private:
  std::shared_ptr<const TermNode> node_;
};

struct NameTerm {
  NameKind name;
};
struct NonceTerm {
  Nonce nonce;
};
struct KeyTerm {
  KeyMaterial key;
};
struct DataTerm {
  UserData data;
};
struct PairTerm {
  Term left;
  Term right;
};
struct EncTerm {
  Term payload;
  FuncName func;
  std::optional<Term> key_arg;
};
/// Template placeholder bound through a symbol table or a role's knowledge.
struct VarTerm {
  std::string id;
  Sort sort;
};
/// A received ciphertext block that has not been opened (no key yet, or a
/// ticket to forward). `block_xml` is the canonical block element.
struct SealedTerm {
  FuncName func;
  std::string key_ref;
  std::string block_xml;
  bool in_body = false;
};

struct TermNode {
  std::variant<NameTerm, NonceTerm, KeyTerm, DataTerm, PairTerm, EncTerm, VarTerm, SealedTerm> value;
};

template <class T>
const T* Term::as() const noexcept {
  return std::get_if<T>(&node_->value);
}

// Constructors validate the leaf invariants and throw Error(invalid_term).
Term make_name(NameKind name);
Term make_nonce(Nonce nonce);
Term make_key(KeyMaterial key);
Term make_data(UserData data);
Term make_var(std::string id, Sort sort);
Term make_sealed(SealedTerm sealed);

Term pair(Term left, Term right);
/// Left-nested pairing of a non-empty sequence: a,b,c -> ((a,b),c).
Term sequence(const std::vector<Term>& items);

/// Symbolic encryption node. Throws MissingKeyArg / UnexpectedKeyArg.
Term encrypt_term(Term payload, FuncName func, std::optional<Term> key_arg);

/// Structural equality. Pairs are not associative; KeyMaterial labels are
/// not compared.
bool term_equal(const Term& a, const Term& b);
inline bool operator==(const Term& a, const Term& b) { return term_equal(a, b); }

std::size_t term_size(const Term& t);
std::size_t term_depth(const Term& t);

/// All Pair nodes flattened away, left to right.
std::vector<Term> flatten(const Term& t);
/// Rebuilds every pair sequence (including inside Enc payloads) as left-nested.
Term normalize_pairs(const Term& t);

bool is_leaf(const Term& t) noexcept;
/// Sort of a concrete leaf or Var; nullopt for Pair/Enc/Sealed.
std::optional<Sort> sort_of(const Term& t);

std::string_view kind_name(const Term& t) noexcept;

}  // namespace wsext

namespace wsext {

/// "2009-04-15T10:00:00.000Z"
std::string format_utc(UtcMillis t);
/// Accepts exactly the form format_utc produces.
std::optional<UtcMillis> parse_utc(std::string_view text);

}  // namespace wsext
