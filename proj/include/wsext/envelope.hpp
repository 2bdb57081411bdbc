#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wsext/crypto.hpp"
#include "wsext/term.hpp"
#include "wsext/token_codec.hpp"

namespace wsext {

enum class KeyUse {
  symmetric,       // sk / hmac key
  public_encrypt,  // pk(K): encrypt with the public half, decrypt with the private half
  signing,         // pk(K) signs with the private half, verifies with the public half
};

/// Key material a party holds, addressed by label or by owner name.
struct KeyEntry {
  std::string label;
  KeyUse use = KeyUse::symmetric;
  /// The KeyTerm as it appears in messages (symmetric bytes or the public half).
  Term term;
  /// Private half in DER form; empty when only the public half is held.
  SecretBytes private_part;
  /// Participant whose key this is, for key arguments written as a name.
  std::optional<Term> owner;
};

class KeyRing {
 public:
  /// Replaces any entry with the same label.
  void add(KeyEntry entry);
  const KeyEntry* find(std::string_view label) const;
  const KeyEntry* find_owner(const Term& name, std::optional<KeyUse> use = std::nullopt) const;
  /// Entry whose term equals `key` (labels ignored).
  const KeyEntry* find_key(const Term& key) const;
  const std::vector<KeyEntry>& entries() const noexcept { return entries_; }

 private:
  std::vector<KeyEntry> entries_;
};

/// Key resolution and hash-preimage candidates for one party.
struct EnvelopeContext {
  const CryptoProvider* crypto = nullptr;
  const KeyRing* keys = nullptr;
  /// Leaves the party already knows; h / hmac digests are matched against them.
  std::vector<Term> known;
};

struct EnvelopeOptions {
  CodecOptions codec;
  /// Fixed message id instead of a fresh UUID.
  std::optional<std::string> message_id;
  /// Blocks whose key is unknown become Sealed terms instead of failing.
  bool allow_sealed = false;
};

struct EncryptedBlock {
  Bytes ciphertext;
  FuncName func = FuncName::sk;
  std::string algorithm_id;
  std::string key_ref;
  bool key_ref_is_name = false;
  /// Element kinds of the plaintext sequence: schema ids, "UserData" or "EncryptedBlock".
  std::vector<std::string> inner_manifest;
};

using HeaderItem = std::variant<TokenElement, EncryptedBlock>;
using BodyItem = std::variant<UserData, EncryptedBlock>;

struct Envelope {
  std::vector<HeaderItem> header_tokens;
  std::vector<BodyItem> body_parts;
  /// Top-level item order: 'H' takes the next header item, 'B' the next body part.
  std::string layout;
  std::string message_id;
};

/// Throws UnresolvedKey, MixedPlacement, PatternViolation, UnsupportedTerm.
Envelope build_envelope(const Term& t, const EnvelopeContext& ctx, const EnvelopeOptions& options = {});

std::string serialize(const Envelope& e, const CodecOptions& codec = {});
std::size_t envelope_size(const Envelope& e, const CodecOptions& codec = {});

/// Structural parse, no cryptography. Throws MalformedEnvelope.
Envelope envelope_from_xml(std::string_view document, const CodecOptions& codec = {});

/// Throws DecryptFailure, ManifestMismatch, MalformedEnvelope, UnresolvedKey.
Term envelope_to_term(const Envelope& e, const EnvelopeContext& ctx, const EnvelopeOptions& options = {});
Term parse_envelope(std::string_view document, const EnvelopeContext& ctx, const EnvelopeOptions& options = {});

/// Tries to open a Sealed term with the current context; returns it unchanged
/// if its key or preimage is still unknown.
Term open_sealed(const Term& sealed, const EnvelopeContext& ctx, const EnvelopeOptions& options = {});

/// Canonical XML of a block and of a user-data element.
std::string block_xml(const EncryptedBlock& b);
std::string user_data_xml(const UserData& d);

std::string random_uuid(const CryptoProvider& crypto);

}  // namespace wsext
