#include "wsext/notation.hpp"

#include <cctype>
#include <sstream>

#include "wsext/error.hpp"

namespace wsext {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\''; }

KeyMaterial parse_key_value(std::string_view v, const std::string& label) {
  KeyMaterial k;
  k.label = label;
  std::optional<Bytes> bytes;
  if (v.starts_with("hex:")) {
    k.encoding = KeyEncoding::hexBinary;
    bytes = from_hex(v.substr(4));
  } else if (v.starts_with("base64:")) {
    k.encoding = KeyEncoding::base64Binary;
    bytes = base64_decode(v.substr(7));
  }
  if (!bytes) throw Error(Errc::syntax_error, "key value for " + label + " must be hex:... or base64:...");
  k.bytes = std::move(*bytes);
  return k;
}

Term parse_value(Sort sort, std::string_view v, const std::string& id) {
  auto bad = [&](const char* what) { return Error(Errc::syntax_error, "binding " + id + ": " + what); };
  switch (sort) {
    case Sort::plain_name: return make_name(PlainName{std::string(v)});
    case Sort::distinguished_name: {
      std::vector<std::string> parts;
      std::string cur;
      for (char c : v) {
        if (c == '|') {
          parts.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      parts.push_back(cur);
      if (parts.size() != 4) throw bad("distinguished name needs O|OU|CN|C");
      return make_name(DistinguishedName{parts[0], parts[1], parts[2], parts[3]});
    }
    case Sort::user_domain_name: {
      auto at = v.find('@');
      if (at == std::string_view::npos) throw bad("user-domain name needs user@domain");
      return make_name(UserDomainName{std::string(v.substr(0, at)), std::string(v.substr(at + 1))});
    }
    case Sort::ipv4_name: return make_name(IpV4Name{std::string(v)});
    case Sort::ipv6_name: return make_name(IpV6Name{std::string(v)});
    case Sort::domain_name: return make_name(DomainName{std::string(v)});
    case Sort::random_nonce: {
      auto b = from_hex(v);
      if (!b) throw bad("nonce value must be hex");
      return make_nonce(RandomNonce{std::move(*b)});
    }
    case Sort::timestamp: {
      auto t = parse_utc(v);
      if (!t) throw bad("timestamp must be YYYY-MM-DDThh:mm:ss.sssZ");
      return make_nonce(Timestamp{*t});
    }
    case Sort::key:
    case Sort::public_key:
    case Sort::signing_key:
    case Sort::dh_key: return make_key(parse_key_value(v, id));
    case Sort::user_data: {
      UserData d;
      if (v.starts_with("text:")) {
        d.content = to_bytes(v.substr(5));
        d.media_label = "text/plain";
      } else if (v.starts_with("hex:")) {
        auto b = from_hex(v.substr(4));
        if (!b) throw bad("bad hex user data");
        d.content = std::move(*b);
        d.media_label = "application/octet-stream";
      } else {
        throw bad("user data must be text:... or hex:...");
      }
      d.empty_payload = d.content.empty();
      return make_data(std::move(d));
    }
  }
  throw bad("unknown sort");
}

std::string format_value(const Term& t) {
  if (auto* n = t.as<NameTerm>()) {
    return std::visit(
        [](const auto& v) -> std::string {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, DistinguishedName>)
            return v.organization + "|" + v.organizational_unit + "|" + v.common_name + "|" + v.country;
          else if constexpr (std::is_same_v<T, UserDomainName>)
            return v.user + "@" + v.domain;
          else if constexpr (std::is_same_v<T, DomainName>)
            return v.domain;
          else if constexpr (std::is_same_v<T, PlainName>)
            return v.name;
          else
            return v.address;
        },
        n->name);
  }
  if (auto* n = t.as<NonceTerm>()) {
    if (auto* r = std::get_if<RandomNonce>(&n->nonce)) return to_hex(r->bytes);
    return format_utc(std::get<Timestamp>(n->nonce).instant);
  }
  if (auto* k = t.as<KeyTerm>()) {
    return k->key.encoding == KeyEncoding::hexBinary ? "hex:" + to_hex(k->key.bytes)
                                                     : "base64:" + base64_encode(k->key.bytes);
  }
  if (auto* d = t.as<DataTerm>()) {
    if (d->data.media_label == "text/plain") return "text:" + to_string(ByteView(d->data.content));
    return "hex:" + to_hex(d->data.content);
  }
  return {};
}

class TermParser {
 public:
  TermParser(std::string_view text, const SymbolTable& table) : s_(text), table_(table) {}

  Term parse() {
    Term t = parse_sequence();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::syntax_error, what + " at position " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  std::string identifier() {
    skip_ws();
    if (pos_ >= s_.size() || !ident_start(s_[pos_])) fail("expected identifier");
    std::size_t start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  Term resolve(const std::string& id) {
    const Binding* b = table_.find(id);
    if (!b) throw Error(Errc::unbound_identifier, id);
    if (b->value) return *b->value;
    return make_var(id, b->sort);
  }

  Term parse_sequence() {
    Term acc = parse_atom();
    while (accept(',')) acc = pair(acc, parse_atom());
    return acc;
  }

  Term parse_atom() {
    if (accept('(')) {
      Term inner = parse_sequence();
      expect(')');
      return inner;
    }
    if (accept('{')) {
      Term payload = parse_sequence();
      expect('}');
      std::size_t at = pos_;
      std::string fname = identifier();
      auto func = func_from_string(fname);
      if (!func) {
        pos_ = at;
        fail("unknown function '" + fname + "'");
      }
      std::optional<Term> key;
      if (accept('(')) {
        key = resolve(identifier());
        expect(')');
      }
      return encrypt_term(std::move(payload), *func, std::move(key));
    }
    return resolve(identifier());
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  const SymbolTable& table_;
};

void print_into(const Term& t, const SymbolTable* table, std::string& out) {
  if (auto* p = t.as<PairTerm>()) {
    print_into(p->left, table, out);
    out += ',';
    bool group = p->right.is<PairTerm>();
    if (group) out += '(';
    print_into(p->right, table, out);
    if (group) out += ')';
    return;
  }
  if (auto* e = t.as<EncTerm>()) {
    out += '{';
    print_into(e->payload, table, out);
    out += '}';
    out += to_string(e->func);
    if (e->key_arg) {
      out += '(';
      print_into(*e->key_arg, table, out);
      out += ')';
    }
    return;
  }
  if (auto* v = t.as<VarTerm>()) {
    out += v->id;
    return;
  }
  if (t.is<SealedTerm>()) throw Error(Errc::unsupported_term, "a sealed block has no notation");
  if (table) {
    if (auto id = table->identifier_of(t)) {
      out += *id;
      return;
    }
  }
  if (auto* k = t.as<KeyTerm>(); k && is_identifier(k->key.label)) {
    out += k->key.label;
    return;
  }
  throw Error(Errc::unbound_identifier, std::string("no identifier for ") + std::string(kind_name(t)) + " value");
}

}  // namespace

bool is_identifier(std::string_view s) noexcept {
  if (s.empty() || !ident_start(s.front())) return false;
  for (char c : s)
    if (!ident_char(c)) return false;
  return !func_from_string(s).has_value();
}

SymbolTable SymbolTable::parse(std::string_view sidecar) {
  SymbolTable table;
  std::istringstream in{std::string(sidecar)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::syntax_error, "line " + std::to_string(line_no) + ": expected 'identifier = kind'");
    std::string id(trim(line.substr(0, eq)));
    std::string_view rest = trim(line.substr(eq + 1));
    if (!is_identifier(id))
      throw Error(Errc::syntax_error, "line " + std::to_string(line_no) + ": bad identifier '" + id + "'");
    auto space = rest.find_first_of(" \t");
    std::string_view kind = rest.substr(0, space);
    auto sort = sort_from_string(kind);
    if (!sort)
      throw Error(Errc::syntax_error, "line " + std::to_string(line_no) + ": unknown kind '" + std::string(kind) + "'");
    std::optional<Term> value;
    if (space != std::string_view::npos) {
      std::string_view v = trim(rest.substr(space));
      if (!v.empty()) value = parse_value(*sort, v, id);
    }
    table.bind(id, *sort, std::move(value));
  }
  return table;
}

void SymbolTable::bind(const std::string& id, Sort sort, std::optional<Term> value) {
  entries_.insert_or_assign(id, Binding{sort, std::move(value)});
}

const Binding* SymbolTable::find(std::string_view id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> SymbolTable::identifier_of(const Term& leaf) const {
  for (const auto& [id, b] : entries_) {
    if (!b.value || !term_equal(*b.value, leaf)) continue;
    // Keys compare without their label; prefer the matching label.
    if (auto* k = leaf.as<KeyTerm>(); k && !k->key.label.empty() && k->key.label != id) continue;
    return id;
  }
  return std::nullopt;
}

std::string SymbolTable::to_text() const {
  std::string out;
  for (const auto& [id, b] : entries_) {
    out += id;
    out += " = ";
    out += to_string(b.sort);
    if (b.value) {
      out += ' ';
      out += format_value(*b.value);
    }
    out += '\n';
  }
  return out;
}

Term parse_term(std::string_view text, const SymbolTable& table) { return TermParser(text, table).parse(); }

std::string print_term(const Term& t, const SymbolTable* table) {
  std::string out;
  print_into(t, table, out);
  return out;
}

}  // namespace wsext
