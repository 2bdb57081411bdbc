#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace wsext {

/// A compiled XML Schema `pattern` facet.
///
/// Implements the regular-expression dialect of XML Schema Part 2 (Appendix
/// F): branches, counted quantifiers, character class expressions with
/// subtraction, the multi-character escapes (\d \w \s \i \c and their
/// complements) and Unicode category escapes. `^` and `$` are ordinary
/// characters. Matching is implicitly anchored to the whole value and runs
/// as a Thompson NFA simulation, so patterns such as `(\w+\.|\w+)+` cannot
/// backtrack exponentially.
class XsdPattern {
 public:
  /// Throws Error(bad_pattern) with the offending position.
  static XsdPattern compile(std::string_view pattern);

  /// True iff the whole UTF-8 value is matched. Ill-formed UTF-8 never matches.
  bool matches(std::string_view value) const;

  const std::string& source() const noexcept { return source_; }

  struct Program;

 private:
  XsdPattern(std::string source, std::shared_ptr<const Program> program);

  std::string source_;
  std::shared_ptr<const Program> program_;
};

/// XML Schema \w: every code point outside the Unicode P, Z and C categories.
bool is_xsd_word_char(char32_t cp);
/// XML Schema \d: Unicode category Nd.
bool is_xsd_digit(char32_t cp);

}  // namespace wsext
