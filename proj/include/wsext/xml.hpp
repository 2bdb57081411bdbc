#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wsext::xml {

/// Minimal element tree. Names are kept as written (prefix included); the
/// wire formats here use fixed prefixes, so no namespace resolution is done.
struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;

  const Element* child(std::string_view child_name) const;
  std::optional<std::string_view> attribute(std::string_view attr_name) const;
};

/// Parses a complete document. Throws Error(malformed_xml).
Element parse(std::string_view document);

/// Parses a sequence of sibling elements (no single root required).
std::vector<Element> parse_fragment(std::string_view fragment);

std::string escape_text(std::string_view text);
std::string escape_attribute(std::string_view text);

/// Canonical form: attributes sorted by name, no whitespace between
/// elements, empty elements written as start/end pairs.
void write(const Element& element, std::string& out);
std::string to_string(const Element& element);

/// Appends `<name a="v"...>` with attributes sorted.
void open_tag(std::string& out, std::string_view name,
              std::vector<std::pair<std::string, std::string>> attributes = {});
void close_tag(std::string& out, std::string_view name);
/// `<name>escaped text</name>`
void text_element(std::string& out, std::string_view name, std::string_view text);

}  // namespace wsext::xml

namespace wsext::xml {

/// Valid UTF-8 made only of characters XML 1.0 allows in content.
bool is_xml_text(std::string_view text);

}  // namespace wsext::xml
