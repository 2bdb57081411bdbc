#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "wsext/bytes.hpp"

namespace wsext {

/// Concrete algorithms behind the four function classes (sk, pk, h, hmac),
/// plus the signature scheme and DH group used by signed key agreement.
struct AlgorithmSuite {
  std::string sk_algorithm = "aes-128-gcm";
  std::string pk_algorithm = "rsa-2048-oaep-sha256";
  std::string hash_algorithm = "sha-256";
  std::string hmac_algorithm = "hmac-sha-256";
  std::string signature_algorithm = "rsa-2048-pss-sha256";
  std::string dh_group = "ffdhe2048";

  /// "default" or "strong" (AES-256, RSA-3072, SHA-512, ffdhe3072).
  static AlgorithmSuite named(std::string_view name);
  bool operator==(const AlgorithmSuite&) const = default;
};

/// Every algorithm id the provider knows.
const std::vector<std::string>& registered_algorithms();

struct KeyPair {
  Bytes public_part;
  SecretBytes private_part;
  std::string algorithm;
};

/// Stateless after construction; safe to share across threads.
///
/// Wire formats:
///   sk ciphertext   iv(12) || ciphertext || tag(16)
///   pk ciphertext   0x00 || RSA-OAEP(m)                      (m within the OAEP limit)
///                   0x01 || RSA-OAEP(k) || sk_encrypt(k, m)  (hybrid, fresh k)
///   RSA keys        DER SubjectPublicKeyInfo / DER private key
///   DH values       big-endian, public values padded to the prime's length
class CryptoProvider {
 public:
  /// Throws UnknownAlgorithm if any id of the suite is not registered.
  explicit CryptoProvider(AlgorithmSuite suite = {}, bool hybrid_pk = true);

  const AlgorithmSuite& suite() const noexcept { return suite_; }
  bool hybrid_pk() const noexcept { return hybrid_pk_; }

  Bytes random_bytes(std::size_t n) const;

  std::size_t sk_key_length() const noexcept;
  Bytes sk_encrypt(ByteView key, ByteView plaintext) const;
  /// Throws BadKeyLength, AuthFailure.
  Bytes sk_decrypt(ByteView key, ByteView ciphertext) const;
  Bytes sk_encrypt_with_iv(ByteView key, ByteView iv, ByteView plaintext, ByteView aad = {}) const;

  KeyPair pk_generate() const;
  /// Largest plaintext that fits a single OAEP block.
  std::size_t pk_raw_limit() const noexcept;
  /// Throws PlaintextTooLong when the payload exceeds the OAEP limit and
  /// hybrid mode is off.
  Bytes pk_encrypt(ByteView public_part, ByteView plaintext) const;
  /// Throws DecryptFailure.
  Bytes pk_decrypt(ByteView private_part, ByteView ciphertext) const;

  Bytes hash(ByteView data) const;
  Bytes hmac(ByteView key, ByteView data) const;
  bool hmac_verify(ByteView key, ByteView data, ByteView tag) const;

  KeyPair sig_generate() const;
  Bytes sign(ByteView private_part, ByteView data) const;
  bool verify(ByteView public_part, ByteView data, ByteView signature) const;

  KeyPair dh_generate() const;
  /// Shared secret passed through HKDF-SHA256 to sk_key_length() octets.
  /// Throws InvalidPeerKey for 0, 1, p-1 or values outside the subgroup.
  Bytes dh_shared(ByteView private_part, ByteView peer_public) const;
  Bytes dh_public_from_private(ByteView private_part) const;
  Bytes dh_raw_shared(ByteView private_part, ByteView peer_public) const;
  Bytes dh_prime() const;
  Bytes derive_key(ByteView shared_secret) const;

 private:
  AlgorithmSuite suite_;
  bool hybrid_pk_;
};

}  // namespace wsext
