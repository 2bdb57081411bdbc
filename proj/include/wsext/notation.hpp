#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "wsext/term.hpp"

namespace wsext {

struct Binding {
  Sort sort;
  std::optional<Term> value;
};

/// Identifier -> basic-set membership, optionally with a concrete value.
///
/// Sidecar format, one binding per line (`#` starts a comment):
///
///     A   = name alice
///     S   = dn Petru Maior|Engineering|bgenge|RO
///     U   = userdomain alice@host.example.org
///     Na  = nonce 0011223344556677
///     T   = timestamp 2009-04-15T10:00:00.000Z
///     Kab = key hex:DEADBEEF
///     M   = data text:hello
///     PKb = pubkey
///
/// A binding without a value leaves the identifier as a placeholder.
class SymbolTable {
 public:
  static SymbolTable parse(std::string_view sidecar);

  void bind(const std::string& id, Sort sort, std::optional<Term> value = std::nullopt);
  const Binding* find(std::string_view id) const;
  /// First identifier whose bound value equals `leaf`.
  std::optional<std::string> identifier_of(const Term& leaf) const;
  std::string to_text() const;

  const std::map<std::string, Binding, std::less<>>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Binding, std::less<>> entries_;
};

/// Comma sequences desugar to left-nested pairs, `{...}f(K)` is an
/// encryption node, parentheses group. Throws SyntaxError (with position),
/// UnboundIdentifier, MissingKeyArg or UnexpectedKeyArg.
Term parse_term(std::string_view text, const SymbolTable& table);

/// Canonical notation without spaces. Concrete leaves are printed through a
/// reverse lookup in `table`; throws UnboundIdentifier if none is found.
std::string print_term(const Term& t, const SymbolTable* table = nullptr);

bool is_identifier(std::string_view s) noexcept;

}  // namespace wsext
