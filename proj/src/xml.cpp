#include "wsext/xml.hpp"

#include <expat.h>

#include <algorithm>
#include <memory>

#include "wsext/error.hpp"

namespace wsext::xml {

const Element* Element::child(std::string_view child_name) const {
  for (const auto& c : children)
    if (c.name == child_name) return &c;
  return nullptr;
}

std::optional<std::string_view> Element::attribute(std::string_view attr_name) const {
  for (const auto& [k, v] : attributes)
    if (k == attr_name) return std::string_view(v);
  return std::nullopt;
}

namespace {

struct ParserDeleter {
  void operator()(XML_Parser p) const { XML_ParserFree(p); }
};

struct TreeBuilder {
  Element root;
  std::vector<Element*> stack;
  bool seen_root = false;
  bool multiple_roots = false;
};

void on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
  auto* tb = static_cast<TreeBuilder*>(user);
  Element e;
  e.name = name;
  for (int i = 0; attrs[i]; i += 2) e.attributes.emplace_back(attrs[i], attrs[i + 1]);
  std::sort(e.attributes.begin(), e.attributes.end());
  if (tb->stack.empty()) {
    if (tb->seen_root) tb->multiple_roots = true;
    tb->seen_root = true;
    tb->root = std::move(e);
    tb->stack.push_back(&tb->root);
  } else {
    auto& kids = tb->stack.back()->children;
    kids.push_back(std::move(e));
    tb->stack.push_back(&kids.back());
  }
}

void on_end(void* user, const XML_Char*) { static_cast<TreeBuilder*>(user)->stack.pop_back(); }

void on_text(void* user, const XML_Char* s, int len) {
  auto* tb = static_cast<TreeBuilder*>(user);
  if (!tb->stack.empty()) tb->stack.back()->text.append(s, static_cast<std::size_t>(len));
}

void reject_doctype(void* user, const XML_Char*, const XML_Char*, const XML_Char*, int) {
  static_cast<TreeBuilder*>(user)->multiple_roots = true;
}

}  // namespace

Element parse(std::string_view document) {
  std::unique_ptr<XML_ParserStruct, ParserDeleter> parser(XML_ParserCreate("UTF-8"));
  if (!parser) throw Error(Errc::malformed_xml, "cannot allocate parser");
  TreeBuilder tb;
  XML_SetUserData(parser.get(), &tb);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_text);
  XML_SetStartDoctypeDeclHandler(parser.get(), reject_doctype);
  if (XML_Parse(parser.get(), document.data(), static_cast<int>(document.size()), XML_TRUE) ==
      XML_STATUS_ERROR) {
    throw Error(Errc::malformed_xml,
                std::string(XML_ErrorString(XML_GetErrorCode(parser.get()))) + " at line " +
                    std::to_string(XML_GetCurrentLineNumber(parser.get())));
  }
  if (!tb.seen_root || tb.multiple_roots) throw Error(Errc::malformed_xml, "document type not accepted");
  return std::move(tb.root);
}

std::vector<Element> parse_fragment(std::string_view fragment) {
  std::string wrapped;
  wrapped.reserve(fragment.size() + 16);
  wrapped += "<fragment>";
  wrapped += fragment;
  wrapped += "</fragment>";
  Element root = parse(wrapped);
  if (!root.text.empty()) throw Error(Errc::malformed_xml, "text outside elements in fragment");
  return std::move(root.children);
}

namespace {

void escape_into(std::string& out, std::string_view text, bool attribute) {
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"':
        if (attribute) out += "&quot;";
        else out += c;
        break;
      case '\r': out += "&#13;"; break;
      case '\t':
        if (attribute) out += "&#9;";
        else out += c;
        break;
      case '\n':
        if (attribute) out += "&#10;";
        else out += c;
        break;
      default: out += c;
    }
  }
}

}  // namespace

std::string escape_text(std::string_view text) {
  std::string out;
  escape_into(out, text, false);
  return out;
}

std::string escape_attribute(std::string_view text) {
  std::string out;
  escape_into(out, text, true);
  return out;
}

void open_tag(std::string& out, std::string_view name,
              std::vector<std::pair<std::string, std::string>> attributes) {
  std::sort(attributes.begin(), attributes.end());
  out += '<';
  out += name;
  for (const auto& [k, v] : attributes) {
    out += ' ';
    out += k;
    out += "=\"";
    escape_into(out, v, true);
    out += '"';
  }
  out += '>';
}

void close_tag(std::string& out, std::string_view name) {
  out += "</";
  out += name;
  out += '>';
}

void text_element(std::string& out, std::string_view name, std::string_view text) {
  open_tag(out, name);
  escape_into(out, text, false);
  close_tag(out, name);
}

void write(const Element& element, std::string& out) {
  open_tag(out, element.name, element.attributes);
  escape_into(out, element.text, false);
  for (const auto& c : element.children) write(c, out);
  close_tag(out, element.name);
}

std::string to_string(const Element& element) {
  std::string out;
  write(element, out);
  return out;
}

}  // namespace wsext::xml

namespace wsext::xml {

bool is_xml_text(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len]) return false;
    bool allowed = cp == 0x9 || cp == 0xA || cp == 0xD || (cp >= 0x20 && cp <= 0xD7FF) ||
                   (cp >= 0xE000 && cp <= 0xFFFD) || (cp >= 0x10000 && cp <= 0x10FFFF);
    if (!allowed) return false;
    i += len;
  }
  return true;
}

}  // namespace wsext::xml
